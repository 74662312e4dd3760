// SPDX-License-Identifier: Apache-2.0
#include "secloc/dataset.hpp"

#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "secloc/errors.hpp"

namespace secloc {

using nlohmann::json;

std::filesystem::path anchors_sidecar_path(const std::filesystem::path& dataset_path) {
  auto p = dataset_path;
  p.replace_extension();
  p += ".anchors.json";
  return p;
}

namespace {

json record_to_json(const CirRecord& rec) {
  json cirs = json::object();
  for (const auto& [id, cir] : rec.cirs) {
    json samples = json::array();
    for (const auto& s : cir.samples) samples.push_back(json::array({s.real(), s.imag()}));
    cirs[std::to_string(id)] = std::move(samples);
  }
  json j;
  j["truth"] = json::array({rec.truth.x, rec.truth.y});
  j["traj"] = rec.traj;
  j["idx"] = rec.idx;
  j["cirs"] = std::move(cirs);
  j["dropped"] = rec.dropped;
  j["nlos"] = rec.nlos;
  return j;
}

CirRecord record_from_json(const json& j, std::size_t line, std::size_t l_samples, double sample_period) {
  CirRecord rec;
  try {
    const auto& truth = j.at("truth");
    if (!truth.is_array() || truth.size() != 2) throw FormatError(line, "\"truth\" must be [x, y]");
    rec.truth = {truth[0].get<double>(), truth[1].get<double>()};
    rec.traj = j.at("traj").get<int>();
    rec.idx = j.at("idx").get<int>();
    for (const auto& [key, samples] : j.at("cirs").items()) {
      int id = 0;
      try {
        std::size_t used = 0;
        id = std::stoi(key, &used);
        if (used != key.size()) throw std::invalid_argument(key);
      } catch (const std::exception&) {
        throw FormatError(line, "CIR key \"" + key + "\" is not an anchor id");
      }
      CirVector cir;
      cir.sample_period = sample_period;
      cir.samples.reserve(samples.size());
      for (const auto& s : samples) {
        if (!s.is_array() || s.size() != 2) throw FormatError(line, "CIR samples must be [re, im] pairs");
        cir.samples.emplace_back(s[0].get<double>(), s[1].get<double>());
      }
      if (cir.samples.size() != l_samples) {
        throw FormatError(line, "anchor " + key + " has " + std::to_string(cir.samples.size()) +
                                    " samples, header says " + std::to_string(l_samples));
      }
      rec.cirs.emplace(id, std::move(cir));
    }
    rec.dropped = j.at("dropped").get<std::set<int>>();
    if (j.contains("nlos")) rec.nlos = j["nlos"].get<std::set<int>>();
  } catch (const json::exception& e) {
    throw FormatError(line, e.what());
  }
  return rec;
}

}  // namespace

void save_dataset(const std::filesystem::path& path, const Dataset& dataset) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  save_anchors(anchors_sidecar_path(path), dataset.anchors);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  json header = {{"version", kDatasetVersion}, {"l_samples", dataset.l_samples}, {"sample_period", dataset.sample_period}};
  out << header.dump() << '\n';
  for (const auto& rec : dataset.records) out << record_to_json(rec).dump() << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  Dataset ds;
  ds.anchors = load_anchors(anchors_sidecar_path(path));

  std::string text;
  std::size_t line = 0;
  bool header_seen = false;
  while (std::getline(in, text)) {
    ++line;
    if (text.empty()) continue;
    json j;
    try {
      j = json::parse(text);
    } catch (const json::parse_error& e) {
      throw FormatError(line, std::string("invalid JSON: ") + e.what());
    }
    if (!header_seen) {
      try {
        if (j.at("version").get<int>() != kDatasetVersion) throw FormatError(line, "unsupported dataset version");
        ds.l_samples = j.at("l_samples").get<std::size_t>();
        ds.sample_period = j.at("sample_period").get<double>();
      } catch (const json::exception& e) {
        throw FormatError(line, std::string("bad header: ") + e.what());
      }
      header_seen = true;
      continue;
    }
    auto rec = record_from_json(j, line, ds.l_samples, ds.sample_period);
    try {
      check_record(rec, ds.anchors);
    } catch (const SchemaError& e) {
      throw SchemaError("line " + std::to_string(line) + ": " + e.what());
    }
    ds.records.push_back(std::move(rec));
  }
  if (!header_seen) throw FormatError(line, "missing dataset header");
  return ds;
}

}  // namespace secloc
