#pragma once

#include <json.hpp>
#include <ostream>

#include "dpmqte/dpm/dpm.hpp"

namespace dpmqte::dpm {

nlohmann::json to_json(const DpmHyper& hyper);
DpmHyper hyper_from_json(const nlohmann::json& j);

/// Full chain state, enough to resume with run_mcmc_from.
nlohmann::json to_json(const DpmState& state);
DpmState state_from_json(const nlohmann::json& j);

/// One row per kept draw: draw, alpha, lambda, m_1..m_d, psi_11..psi_dd
/// (row-major), kstar, loglik.
void write_posterior_csv(const DpmPosterior& post, const RowMatrix& data, std::ostream& out);

/// One row per kept draw: draw, loglik, logmpp (empty for Pólya-urn chains),
/// alpha, lambda, m..., psi...
void write_diagnostics_csv(const DpmPosterior& post, std::ostream& out);

}  // namespace dpmqte::dpm
