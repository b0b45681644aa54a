#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "calad/tape.hpp"
#include "calad/tensor.hpp"

namespace calad {

struct NamedTensor {
    std::string name;
    Tensor tensor;
};

// Binary container: magic "CALAD1", format version, JSON metadata with the
// tensor manifest, then a raw little-endian float64 payload. Save/load round
// trips are bit-exact.
struct Checkpoint {
    std::string stage;
    std::string config_hash;  // hex
    std::vector<NamedTensor> tensors;
    std::string extra_json = "{}";

    const Tensor* find(const std::string& name) const;
};

// Atomic write: temp file + rename.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);

// Throws ArtifactError when the file is missing, IngestionError on a
// malformed container.
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Verifies the stored hash; throws CheckpointMismatchError on disagreement.
void require_config_hash(const Checkpoint& ckpt, const std::string& expected_hash,
                         const std::string& stage);

// Copies checkpoint tensors into the parameters by name; shapes must match.
void load_parameters(const Checkpoint& ckpt, const std::vector<Parameter*>& params);
std::vector<NamedTensor> snapshot_parameters(const std::vector<Parameter*>& params);

}  // namespace calad
