#pragma once

#include <string>

#include <json.hpp>

#include "estimators.hpp"
#include "simlab.hpp"

namespace fda {

// Canonical JSON documents.  Field order is fixed and nothing volatile
// (timestamps, durations, host details) is embedded, so rerunning a command
// with the same inputs byte-reproduces its output.
using Json = nlohmann::ordered_json;

Json to_json(const RegressionFit& fit);
Json to_json(const HausmanResult& r);
Json to_json(const BalanceResult& r);
Json to_json(const PathWeights& r);
Json to_json(const FoldDiagnostics& f);
Json to_json(const DdmlResult& r);
Json to_json(const PlaceboResult& r);
Json to_json(const YitzhakiWeightGrid& r);
Json to_json(const OracleSeries& s);
Json to_json(const MonteCarloReport& r);

// Top-level document: tool identity, the command that ran, the inputs it
// resolved (after defaults), and the result payload.
Json make_document(const std::string& command, Json inputs, Json result);

// 2-space indented dump with a trailing newline.
std::string render_json(const Json& doc);

// Flat tables for the results that have a natural grid shape.
std::string weights_csv(const YitzhakiWeightGrid& g);
std::string oracle_csv(const MonteCarloReport& r);

}  // namespace fda
