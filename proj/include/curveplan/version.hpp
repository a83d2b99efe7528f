#pragma once

namespace curveplan {

inline constexpr const char* kToolVersion = "0.1.0";

// File-format versions, bumped independently of the tool version.
inline constexpr int kCorpusFormatVersion = 1;
inline constexpr int kEmbeddingFormatVersion = 1;
inline constexpr int kModelFormatVersion = 1;
inline constexpr int kCurveFormatVersion = 1;
inline constexpr int kReportFormatVersion = 1;

}  // namespace curveplan
