// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <vector>

#include "secloc/channel.hpp"

namespace secloc {

inline constexpr int kDatasetVersion = 1;

/// A JSON Lines dataset plus its anchor sidecar.
///
/// Line 1 is a header {"version":1,"l_samples":L,"sample_period":T}; every following line is one
/// record {"truth":[x,y],"traj":t,"idx":k,"cirs":{"<id>":[[re,im],...]},"dropped":[...]} with an
/// optional "nlos":[...] list of anchors that had no line of sight. Anchors live in
/// `<stem>.anchors.json` next to the dataset file.
struct Dataset {
  AnchorSet anchors;
  std::size_t l_samples = 0;
  double sample_period = 0.0;
  std::vector<CirRecord> records;
};

std::filesystem::path anchors_sidecar_path(const std::filesystem::path& dataset_path);

void save_dataset(const std::filesystem::path& path, const Dataset& dataset);

/// Throws FormatError (with 1-based line) on malformed lines and SchemaError on anchor mismatches.
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace secloc
