#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rlalign/env.hpp"
#include "rlalign/phantom.hpp"

namespace rlalign {

// One manifest line. Image paths are relative to the manifest directory.
struct ManifestEntry {
    std::string pair_id;
    std::string fixed;
    std::string moving;
    std::optional<RigidTransform2D> truth;
};

inline constexpr const char* kManifestName = "manifest.jsonl";

std::string manifest_line(const ManifestEntry& e);
ManifestEntry parse_manifest_line(const std::string& line);

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);

// Accepts either a manifest file or a directory holding manifest.jsonl.
std::filesystem::path resolve_manifest(const std::filesystem::path& data);

// Reads every pair; missing or unreadable files raise one IoError naming
// all offenders.
std::vector<PairSample> load_pairs(const std::filesystem::path& manifest);

struct GenDataOptions {
    PhantomConfig phantom;
    PairConfig pair;
    int pairs = 10;
    std::uint64_t seed = 1;
};

// Writes pair_NNNNN_{fixed,moving}.img1 and manifest.jsonl into `out_dir`.
std::vector<ManifestEntry> generate_dataset(const std::filesystem::path& out_dir, const GenDataOptions& opt);

// In-memory variant used by tests and benchmarks.
std::vector<PairSample> generate_samples(const GenDataOptions& opt);

} // namespace rlalign
