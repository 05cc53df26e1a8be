#pragma once

#include <string>

#include <json.hpp>

#include "palp/assessment.hpp"
#include "palp/segmentation.hpp"

namespace palp {

// JSON mappings shared by report files, the CLI and the feedback stream. The
// field-by-field schema is documented in docs/report-schema.md.
void to_json(nlohmann::json& j, const SegmentationConfig& cfg);
void from_json(const nlohmann::json& j, SegmentationConfig& cfg);
void to_json(nlohmann::json& j, const PressEvent& e);
void from_json(const nlohmann::json& j, PressEvent& e);
void to_json(nlohmann::json& j, const OsceThresholds& t);
void from_json(const nlohmann::json& j, OsceThresholds& t);
void to_json(nlohmann::json& j, const SessionInfo& info);
void from_json(const nlohmann::json& j, SessionInfo& info);
void to_json(nlohmann::json& j, const CompetencyReport& r);
void from_json(const nlohmann::json& j, CompetencyReport& r);

std::string report_to_json(const CompetencyReport& report);
// Throws Error(SchemaVersionMismatch) for unknown report versions and
// Error(ParseError) for malformed documents.
CompetencyReport report_from_json(const std::string& text);

// Plain-text rendering for tutors: per task, contribution percentages, press
// statistics and criterion scores, then the criterion averages, the total and
// the OSCE rating.
std::string render_text(const CompetencyReport& report);

}  // namespace palp
