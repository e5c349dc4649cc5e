#pragma once

#include <json.hpp>
#include <ostream>

#include "dpmqte/density/density.hpp"

namespace dpmqte::density {

/// Long-format plot data: one row per grid point with its axis indices,
/// coordinates, average and band.
void write_summary_csv(const JointDensityResult& r, std::ostream& out);
void write_summary_csv(const ConditionalResult& r, std::ostream& out);

/// Long-format per-draw values: draw, axis indices, value.
void write_draws_csv(const JointDensityResult& r, std::ostream& out);
void write_draws_csv(const ConditionalResult& r, std::ostream& out);

nlohmann::json to_json(const JointDensityResult& r);
nlohmann::json to_json(const ConditionalResult& r);

}  // namespace dpmqte::density
