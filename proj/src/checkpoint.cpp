#include "wayflow/checkpoint.hpp"

#include <cstring>

#include "wayflow/binio.hpp"

namespace wayflow {

const Tensor& Checkpoint::get(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end())
        throw DataError("checkpoint is missing tensor: " + name);
    return it->second;
}

std::map<std::string, Tensor> Checkpoint::with_prefix(
    const std::string& prefix) const {
    std::map<std::string, Tensor> out;
    for (const auto& [name, t] : tensors)
        if (name.rfind(prefix, 0) == 0)
            out.emplace(name.substr(prefix.size()), t);
    return out;
}

void write_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::vector<uint8_t> out;
    out.push_back('W');
    out.push_back('I');
    out.push_back('T');
    out.push_back('C');
    binio::put_u32(out, Checkpoint::kVersion);
    binio::put_u64(out, ckpt.config_text.size());
    out.insert(out.end(), ckpt.config_text.begin(), ckpt.config_text.end());
    binio::put_u32(out, static_cast<uint32_t>(ckpt.tensors.size()));
    for (const auto& [name, t] : ckpt.tensors) {
        binio::put_u32(out, static_cast<uint32_t>(name.size()));
        out.insert(out.end(), name.begin(), name.end());
        binio::put_u32(out, static_cast<uint32_t>(t.rank()));
        for (int64_t i = 0; i < t.rank(); ++i)
            binio::put_u64(out, static_cast<uint64_t>(t.dim(i)));
        binio::put_u32(out, 0);  // dtype: float32 little-endian
        for (int64_t i = 0; i < t.numel(); ++i)
            binio::put_f32(out, static_cast<float>(t[i]));
    }
    binio::put_u32(out, binio::crc32(out.data(), out.size()));
    binio::write_file_atomic(path, out);
}

Checkpoint read_checkpoint(const std::string& path) {
    const std::vector<uint8_t> bytes = binio::read_file(path);
    if (bytes.size() < 4 + 4 + 8 + 4 + 4)
        throw DataError("checkpoint truncated: " + path);

    const uint32_t stored_crc =
        static_cast<uint32_t>(bytes[bytes.size() - 4]) |
        (static_cast<uint32_t>(bytes[bytes.size() - 3]) << 8) |
        (static_cast<uint32_t>(bytes[bytes.size() - 2]) << 16) |
        (static_cast<uint32_t>(bytes[bytes.size() - 1]) << 24);
    if (binio::crc32(bytes.data(), bytes.size() - 4) != stored_crc)
        throw DataError("checkpoint crc mismatch: " + path);

    binio::Reader in(bytes.data(), bytes.size() - 4);
    const std::string magic = in.str(4, "magic");
    if (magic != "WITC")
        throw DataError("checkpoint has bad magic: " + path);
    const uint32_t version = in.u32("version");
    if (version != Checkpoint::kVersion)
        throw DataError("unsupported checkpoint version " +
                        std::to_string(version) + ": " + path);

    Checkpoint ckpt;
    const uint64_t cfg_len = in.u64("config length");
    ckpt.config_text = in.str(cfg_len, "config blob");
    const uint32_t count = in.u32("tensor count");
    for (uint32_t i = 0; i < count; ++i) {
        const uint32_t name_len = in.u32("tensor name length");
        const std::string name = in.str(name_len, "tensor name");
        const uint32_t rank = in.u32("tensor rank");
        if (rank > 8) throw DataError("implausible tensor rank in " + path);
        std::vector<int64_t> shape;
        int64_t numel = 1;
        for (uint32_t r = 0; r < rank; ++r) {
            const uint64_t d = in.u64("tensor dims");
            if (d == 0 || d > (1ull << 32))
                throw DataError("implausible tensor extent in " + path);
            shape.push_back(static_cast<int64_t>(d));
            numel *= static_cast<int64_t>(d);
        }
        const uint32_t dtype = in.u32("tensor dtype");
        if (dtype != 0)
            throw DataError("unsupported tensor dtype " +
                            std::to_string(dtype) + " in " + path);
        Tensor t(shape);
        for (int64_t k = 0; k < numel; ++k)
            t[k] = static_cast<double>(in.f32("tensor data"));
        ckpt.tensors.emplace(name, std::move(t));
    }
    if (in.remaining() != 0)
        throw DataError("trailing bytes after tensor table: " + path);
    return ckpt;
}

}  // namespace wayflow
