#pragma once

#include <json.hpp>

#include "dpmqte/bart/bart.hpp"

namespace dpmqte::bart {

/// Flat node list per tree (id, parent, children, rule or leaf value) plus the
/// covariate schema, offset and link: enough to re-predict bit-exactly.
nlohmann::json to_json(const BartPosterior& posterior);
BartPosterior posterior_from_json(const nlohmann::json& j);

}  // namespace dpmqte::bart
