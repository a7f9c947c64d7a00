#include <json.hpp>

#include <fstream>
#include <set>
#include <sstream>

#include "qsdfv/chain_model.hpp"

namespace qsdfv {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& where, const std::string& what) {
  throw Error("chain spec: " + where + ": " + what);
}

void reject_unknown_fields(const json& object, const std::set<std::string>& allowed,
                           const std::string& where) {
  for (const auto& [key, value] : object.items()) {
    if (!allowed.contains(key)) fail(where, "unknown field '" + key + "'");
  }
}

const json& require(const json& object, const std::string& key, const std::string& where) {
  auto it = object.find(key);
  if (it == object.end()) fail(where, "missing field '" + key + "'");
  return *it;
}

std::string label_field(const json& entry, const std::string& key, const std::string& where) {
  const auto& v = require(entry, key, where);
  if (!v.is_string()) fail(where + "." + key, "expected a state label string");
  return v.get<std::string>();
}

double rate_field(const json& entry, const std::string& where) {
  const auto& v = require(entry, "rate", where);
  if (!v.is_number()) fail(where + ".rate", "expected a number");
  const double r = v.get<double>();
  if (!std::isfinite(r) || r < 0.0) fail(where + ".rate", "rate must be finite and >= 0");
  return r;
}

}  // namespace

RateMatrix load_spec(std::string_view document) {
  json doc;
  try {
    doc = json::parse(document.begin(), document.end());
  } catch (const json::parse_error& e) {
    throw Error(std::string("chain spec: malformed JSON: ") + e.what());
  }
  if (!doc.is_object()) fail("<root>", "expected an object");
  reject_unknown_fields(doc, {"states", "rates", "absorption"}, "<root>");

  const auto& states = require(doc, "states", "<root>");
  if (!states.is_array()) fail("states", "expected an array of labels");
  std::vector<std::string> labels;
  for (std::size_t k = 0; k < states.size(); ++k) {
    if (!states[k].is_string()) fail("states[" + std::to_string(k) + "]", "expected a string");
    labels.push_back(states[k].get<std::string>());
  }
  SpacePtr space;
  try {
    space = std::make_shared<const StateSpace>(std::move(labels));
  } catch (const Error& e) {
    fail("states", e.what());
  }

  auto lookup = [&](const std::string& label, const std::string& where) {
    auto idx = space->find(label);
    if (!idx) fail(where, "unknown state '" + label + "'");
    return *idx;
  };

  std::vector<RateMatrix::Entry> entries;
  if (auto it = doc.find("rates"); it != doc.end()) {
    if (!it->is_array()) fail("rates", "expected an array");
    std::set<std::pair<StateIndex, StateIndex>> seen;
    for (std::size_t k = 0; k < it->size(); ++k) {
      const auto& e = (*it)[k];
      const std::string where = "rates[" + std::to_string(k) + "]";
      if (!e.is_object()) fail(where, "expected an object");
      reject_unknown_fields(e, {"from", "to", "rate"}, where);
      const auto from = lookup(label_field(e, "from", where), where + ".from");
      const auto to = lookup(label_field(e, "to", where), where + ".to");
      if (from == to) fail(where, "diagonal rates are derived and may not be given");
      if (!seen.emplace(from, to).second) fail(where, "duplicate rate entry");
      entries.push_back({from, to, rate_field(e, where)});
    }
  }

  std::vector<double> absorb(space->size(), 0.0);
  if (auto it = doc.find("absorption"); it != doc.end()) {
    if (!it->is_array()) fail("absorption", "expected an array");
    std::set<StateIndex> seen;
    for (std::size_t k = 0; k < it->size(); ++k) {
      const auto& e = (*it)[k];
      const std::string where = "absorption[" + std::to_string(k) + "]";
      if (!e.is_object()) fail(where, "expected an object");
      reject_unknown_fields(e, {"from", "rate"}, where);
      const auto from = lookup(label_field(e, "from", where), where + ".from");
      if (!seen.insert(from).second) fail(where, "duplicate absorption entry");
      absorb[from] = rate_field(e, where);
    }
  }
  return RateMatrix(space, std::move(entries), std::move(absorb));
}

RateMatrix load_spec_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open chain spec '" + path.string() + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return load_spec(buffer.str());
}

std::string to_spec_json(const RateMatrix& rates) {
  json doc;
  doc["states"] = rates.space().labels();
  doc["rates"] = json::array();
  for (const auto& e : rates.entries()) {
    doc["rates"].push_back(
        {{"from", rates.space().label(e.from)}, {"to", rates.space().label(e.to)}, {"rate", e.rate}});
  }
  doc["absorption"] = json::array();
  for (StateIndex x = 0; x < rates.size(); ++x) {
    if (rates.absorption(x) > 0.0) {
      doc["absorption"].push_back({{"from", rates.space().label(x)}, {"rate", rates.absorption(x)}});
    }
  }
  return doc.dump();
}

}  // namespace qsdfv
