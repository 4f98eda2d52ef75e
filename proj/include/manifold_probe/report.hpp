#pragma once

// Serialization of analysis results. JSON output has sorted keys and no
// run-dependent fields, so identical results give byte-identical files. Every
// report has a flat CSV mirror for plotting.

#include "manifold_probe/correlate.hpp"
#include "manifold_probe/diagnostics.hpp"
#include "manifold_probe/trajectory_store.hpp"

#include <span>
#include <string>

namespace manifold_probe {

/// Shortest decimal that round-trips to the same double; empty for NaN.
std::string format_number(double value);

std::string validation_json(const ValidationReport& report);
std::string validation_csv(const ValidationReport& report);

std::string health_json(const HealthReport& report);
/// One row; columns include model_id, d_stim, volume and h_score so the file can
/// be concatenated into a scores table for correlation.
std::string health_csv(const HealthReport& report);

std::string profile_json(const LayerProfile& profile);
/// Columns: layer, mean_id, id_lo, id_hi, mean_v, v_lo, v_hi, n.
std::string profile_csv(const LayerProfile& profile);

std::string expansion_json(const ExpansionCurve& curve);
std::string expansion_csv(const ExpansionCurve& curve);

std::string controls_json(std::span<const ControlReport> reports);
/// One row per (control, prompt).
std::string controls_csv(std::span<const ControlReport> reports);

std::string correlation_json(std::span<const CorrelationRow> rows, double epsilon);
std::string correlation_csv(std::span<const CorrelationRow> rows);

}  // namespace manifold_probe
