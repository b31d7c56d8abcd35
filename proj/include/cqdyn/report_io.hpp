#pragma once

#include "cqdyn/diagnostics.hpp"
#include "cqdyn/ensemble.hpp"
#include "cqdyn/measurement.hpp"
#include "cqdyn/model.hpp"
#include "cqdyn/purify.hpp"

#include <json.hpp>

#include <iosfwd>
#include <string>
#include <string_view>

namespace cqdyn {

std::string version();

/// Round-trip decimal representation (%.17g); identical bytes for identical
/// doubles.
std::string format_number(double x);

/// RFC 4180 field: quoted when it contains a comma, quote, CR or LF.
std::string csv_field(std::string_view s);

/// Trajectory table: t, z_1..z_n, then bloch_x, bloch_y, bloch_z, purity for
/// a qubit or purity alone otherwise. The first line is a `#` comment with
/// the library version and the resolved config.
void write_trajectory_csv(std::ostream& out, const Trajectory& traj, const nlohmann::json& config);

/// {"version": .., "config": .., <body fields>}.
nlohmann::json with_provenance(const nlohmann::json& body, const nlohmann::json& config);

nlohmann::json to_json(const ValidationReport& r);
nlohmann::json to_json(const ComparisonReport& r);
nlohmann::json to_json(const MasterEquationStats& s);
nlohmann::json to_json(const LinearityReport& r);
nlohmann::json to_json(const EquivalenceReport& r);
nlohmann::json to_json(const MeasureCheckReport& r);
nlohmann::json to_json(const Series& s);
nlohmann::json to_json(const PhaseGrid& g);

/// Writes text to path, creating parent directories.
void write_file(const std::string& path, const std::string& content);

}  // namespace cqdyn
