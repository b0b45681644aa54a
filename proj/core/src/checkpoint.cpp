#include "calad/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "calad/errors.hpp"

namespace calad {

namespace {

constexpr char kMagic[6] = {'C', 'A', 'L', 'A', 'D', '1'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const char* p) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
    return v;
}

std::uint64_t get_u64(const char* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
    return v;
}

}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
    for (const auto& nt : tensors) {
        if (nt.name == name) return &nt.tensor;
    }
    return nullptr;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    nlohmann::json meta;
    meta["stage"] = ckpt.stage;
    meta["config_hash"] = ckpt.config_hash;
    meta["extra"] = nlohmann::json::parse(ckpt.extra_json);
    nlohmann::json manifest = nlohmann::json::array();
    std::uint64_t offset = 0;  // in float64 elements
    for (const auto& nt : ckpt.tensors) {
        nlohmann::json entry;
        entry["name"] = nt.name;
        entry["shape"] = nt.tensor.shape;
        entry["offset"] = offset;
        manifest.push_back(entry);
        offset += nt.tensor.numel();
    }
    meta["manifest"] = manifest;
    const std::string meta_str = meta.dump();

    std::string header;
    header.append(kMagic, sizeof(kMagic));
    put_u32(header, kVersion);
    put_u64(header, meta_str.size());

    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IngestionError(tmp.string() + ": cannot open for writing");
        out.write(header.data(), static_cast<std::streamsize>(header.size()));
        out.write(meta_str.data(), static_cast<std::streamsize>(meta_str.size()));
        for (const auto& nt : ckpt.tensors) {
            out.write(reinterpret_cast<const char*>(nt.tensor.data.data()),
                      static_cast<std::streamsize>(nt.tensor.numel() * sizeof(double)));
        }
        if (!out) throw IngestionError(tmp.string() + ": write failed");
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ArtifactError(path.string() + ": checkpoint not found");
    char head[18];
    in.read(head, sizeof(head));
    if (in.gcount() != sizeof(head) || std::memcmp(head, kMagic, sizeof(kMagic)) != 0) {
        throw IngestionError(path.string() + ": not a CALAD1 checkpoint");
    }
    const std::uint32_t version = get_u32(head + 6);
    if (version != kVersion) {
        throw IngestionError(path.string() + ": unsupported checkpoint version " +
                             std::to_string(version));
    }
    const std::uint64_t meta_len = get_u64(head + 10);
    std::string meta_str(meta_len, '\0');
    in.read(meta_str.data(), static_cast<std::streamsize>(meta_len));
    if (in.gcount() != static_cast<std::streamsize>(meta_len)) {
        throw IngestionError(path.string() + ": truncated metadata");
    }
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(meta_str);
    } catch (const nlohmann::json::exception& e) {
        throw IngestionError(path.string() + ": bad metadata: " + e.what());
    }

    Checkpoint ckpt;
    ckpt.stage = meta.value("stage", "");
    ckpt.config_hash = meta.value("config_hash", "");
    ckpt.extra_json = meta.contains("extra") ? meta["extra"].dump() : "{}";

    std::vector<double> payload;
    {
        std::vector<char> raw((std::istreambuf_iterator<char>(in)),
                              std::istreambuf_iterator<char>());
        if (raw.size() % sizeof(double) != 0) {
            throw IngestionError(path.string() + ": payload not a multiple of 8 bytes");
        }
        payload.resize(raw.size() / sizeof(double));
        std::memcpy(payload.data(), raw.data(), raw.size());
    }

    for (const auto& entry : meta["manifest"]) {
        NamedTensor nt;
        nt.name = entry["name"].get<std::string>();
        Shape shape = entry["shape"].get<Shape>();
        const std::uint64_t offset = entry["offset"].get<std::uint64_t>();
        const std::size_t count = shape_numel(shape);
        if (offset + count > payload.size()) {
            throw IngestionError(path.string() + ": manifest entry '" + nt.name +
                                 "' exceeds payload");
        }
        nt.tensor = Tensor(shape, std::vector<double>(payload.begin() + offset,
                                                      payload.begin() + offset + count));
        ckpt.tensors.push_back(std::move(nt));
    }
    return ckpt;
}

void require_config_hash(const Checkpoint& ckpt, const std::string& expected_hash,
                         const std::string& stage) {
    if (ckpt.config_hash != expected_hash) {
        throw CheckpointMismatchError("stage '" + stage + "': artifact config hash " +
                                      ckpt.config_hash + " does not match expected " +
                                      expected_hash);
    }
}

void load_parameters(const Checkpoint& ckpt, const std::vector<Parameter*>& params) {
    for (Parameter* p : params) {
        const Tensor* stored = ckpt.find(p->name);
        if (!stored) {
            throw UsageError("checkpoint is missing parameter '" + p->name + "'");
        }
        if (stored->shape != p->value.shape) {
            throw UsageError("checkpoint parameter '" + p->name + "' has shape " +
                             shape_str(stored->shape) + ", expected " +
                             shape_str(p->value.shape));
        }
        p->value = *stored;
        p->zero_grad();
    }
}

std::vector<NamedTensor> snapshot_parameters(const std::vector<Parameter*>& params) {
    std::vector<NamedTensor> out;
    out.reserve(params.size());
    for (const Parameter* p : params) out.push_back({p->name, p->value});
    return out;
}

}  // namespace calad
