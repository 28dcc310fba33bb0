#pragma once

#include "fishmerge/types.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace fishmerge {

/// A parameter set together with its per-tensor role tags, as persisted.
struct Checkpoint {
    ParameterSet params;
    RoleTags tags;
};

/// Extra metadata carried by Fisher-diagonal files (fisher=true in the header).
struct FisherFileMeta {
    std::int64_t n_examples_used = 0;
    std::string mode;  // "exact" | "sampled"
    std::int64_t k = 0;
};

/// Raw contents of an FMRG file. save_checkpoint / fisher persistence are
/// thin wrappers around this pair.
struct FileContents {
    ParameterSet params;
    RoleTags tags;
    bool fisher = false;
    FisherFileMeta fisher_meta;
};

void save_file(const FileContents& contents, const std::filesystem::path& path);
FileContents load_file(const std::filesystem::path& path);

/// Persist a parameter set. Every tensor must carry a role tag and every
/// element must be finite; round-trip through load_checkpoint is bit-exact.
void save_checkpoint(const ParameterSet& params, const RoleTags& role_tags,
                     const std::filesystem::path& path);

/// Load a checkpoint saved by save_checkpoint. Rejects Fisher files.
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Mergeable/private partition of tensor names across parameter sets.
/// mergeable: tagged "body" in every set with identical shapes everywhere.
/// private_names[i]: everything else present in set i.
struct CompatibilityPartition {
    std::vector<std::string> mergeable;
    std::vector<std::vector<std::string>> private_names;
};

/// Throws on lineage mismatch or on a shape conflict over a shared body name.
CompatibilityPartition check_merge_compatibility(std::span<const Checkpoint> sets);

}  // namespace fishmerge
