#pragma once

#include <string>

#include "json.hpp"

#include "haarfact/factorize.hpp"
#include "haarfact/opalg.hpp"
#include "haarfact/randblocks.hpp"
#include "haarfact/reduction.hpp"
#include "haarfact/romega.hpp"
#include "haarfact/xpw.hpp"

namespace haarfact {

using Json = nlohmann::json;

inline constexpr const char* kOperatorSchema = "haarfact.operator/1";
inline constexpr const char* kFamilySchema = "haarfact.family/1";
inline constexpr const char* kCertificateSchema = "haarfact.certificate/1";
inline constexpr const char* kWitnessSchema = "haarfact.witness/1";
inline constexpr const char* kTranscriptSchema = "haarfact.transcript/1";
inline constexpr const char* kReportSchema = "haarfact.report/1";

Json to_json(const OperatorMatrix& t);
OperatorMatrix operator_from_json(const Json& j);

Json to_json(const BlockFamily& f);
BlockFamily family_from_json(const Json& j);

Json to_json(const ReductionCertificate& c);
ReductionCertificate certificate_from_json(const Json& j);

Json to_json(const FactorizationWitness& w);
FactorizationWitness witness_from_json(const Json& j);

Json to_json(const GameTranscript& t);
GameTranscript transcript_from_json(const Json& j);

Json to_json(const MomentReport& m);

// Parses a file; syntax errors become FormatError with the byte offset.
Json load_json(const std::string& path);
void save_json(const std::string& path, const Json& j);

OperatorMatrix load_operator(const std::string& path);
void save_operator(const std::string& path, const OperatorMatrix& t);

// The document without its `metadata` field, dumped canonically.
std::string payload(const Json& j);

// Checks a document of any known schema; returns the schema name or throws FormatError.
std::string validate_document(const Json& j);

}  // namespace haarfact
