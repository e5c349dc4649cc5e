#pragma once

#include <json.hpp>
#include <ostream>

#include "dpmqte/qte/qte.hpp"

namespace dpmqte::qte {

/// Summaries only: grid, per-arm quantiles and CDF/PDF bands, effects and
/// intervals. Timings are left out so the output is deterministic.
nlohmann::json to_json(const QteResult& r);

/// quantity,prob,alpha,avg,lower,upper with quantity in {control, treated, qte}.
/// Arm rows carry no interval.
void write_summary_csv(const QteResult& r, std::ostream& out);

/// Long plot data: arm,kind,s,y,avg,lower,upper for the CDF and (if present) PDF.
void write_curves_csv(const QteResult& r, std::ostream& out);

/// draw,prob,control,treated,qte per kept draw.
void write_draws_csv(const QteResult& r, std::ostream& out);

}  // namespace dpmqte::qte
