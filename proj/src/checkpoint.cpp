#include "shapednet/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace shapednet {

namespace {

void put_u32(std::ostream& os, uint32_t v) {
    const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                       static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
    os.write(b, 4);
}

uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw CheckpointError("unexpected end of checkpoint file");
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

void put_f32(std::ostream& os, float f) { put_u32(os, std::bit_cast<uint32_t>(f)); }

float get_f32(std::istream& is) { return std::bit_cast<float>(get_u32(is)); }

struct StoredTensor {
    Shape shape;
    std::vector<float> data;
};

std::map<std::string, StoredTensor> read_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint file: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "SNF1", 4) != 0)
        throw CheckpointError("bad checkpoint magic in " + path);
    const uint32_t version = get_u32(is);
    if (version != kCheckpointVersion)
        throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
    const uint32_t count = get_u32(is);
    std::map<std::string, StoredTensor> out;
    for (uint32_t t = 0; t < count; ++t) {
        const uint32_t name_len = get_u32(is);
        if (name_len > 4096) throw CheckpointError("implausible tensor name length");
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        if (!is) throw CheckpointError("unexpected end of checkpoint file");
        StoredTensor st;
        const uint32_t rank = get_u32(is);
        if (rank > 8) throw CheckpointError("implausible tensor rank");
        int64_t numel = 1;
        for (uint32_t d = 0; d < rank; ++d) {
            const uint32_t dim = get_u32(is);
            st.shape.push_back(static_cast<int>(dim));
            numel *= dim;
        }
        if (numel < 0 || numel > (int64_t{1} << 31))
            throw CheckpointError("implausible tensor size");
        st.data.resize(static_cast<size_t>(numel));
        for (int64_t i = 0; i < numel; ++i) st.data[static_cast<size_t>(i)] = get_f32(is);
        if (out.count(name)) throw CheckpointError("duplicate tensor name: " + name);
        out.emplace(std::move(name), std::move(st));
    }
    return out;
}

}  // namespace

void save_checkpoint(const std::string& path, ShapedNetModel& model) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open checkpoint file for writing: " + path);
    os.write("SNF1", 4);
    put_u32(os, kCheckpointVersion);
    std::vector<StateEntry> state = model_state(model);
    put_u32(os, static_cast<uint32_t>(state.size()));
    for (const StateEntry& e : state) {
        put_u32(os, static_cast<uint32_t>(e.name.size()));
        os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
        put_u32(os, static_cast<uint32_t>(e.shape.size()));
        for (int d : e.shape) put_u32(os, static_cast<uint32_t>(d));
        for (double v : *e.data) put_f32(os, static_cast<float>(v));
    }
    os.flush();
    if (!os) throw IoError("failed writing checkpoint: " + path);
}

void load_checkpoint(const std::string& path, ShapedNetModel& model) {
    std::map<std::string, StoredTensor> stored = read_file(path);
    std::vector<StateEntry> state = model_state(model);
    std::vector<std::string> problems;
    for (const StateEntry& e : state) {
        auto it = stored.find(e.name);
        if (it == stored.end()) {
            problems.push_back("missing tensor: " + e.name);
            continue;
        }
        if (it->second.shape != e.shape)
            problems.push_back("shape mismatch for " + e.name + ": file " +
                               shape_str(it->second.shape) + " vs model " + shape_str(e.shape));
    }
    std::map<std::string, bool> known;
    for (const StateEntry& e : state) known[e.name] = true;
    for (const auto& [name, st] : stored)
        if (!known.count(name)) problems.push_back("unexpected tensor: " + name);
    if (!problems.empty()) {
        std::ostringstream msg;
        msg << "checkpoint " << path << " does not match model:";
        for (const std::string& p : problems) msg << "\n  " << p;
        throw CheckpointError(msg.str());
    }
    for (StateEntry& e : state) {
        const StoredTensor& st = stored.at(e.name);
        for (size_t i = 0; i < st.data.size(); ++i) (*e.data)[i] = static_cast<double>(st.data[i]);
    }
}

void load_pretrained_backbone(ShapedNetModel& model, const std::string& path) {
    std::map<std::string, StoredTensor> stored = read_file(path);
    std::vector<StateEntry> state = model_state(model);
    // Backbone entries are those belonging to conv01..convNN where NN is the
    // backbone conv count; everything else in the file is ignored.
    auto is_backbone = [&](const std::string& name) {
        if (name.rfind("conv", 0) != 0) return false;
        const size_t slash = name.find('/');
        if (slash == std::string::npos) return false;
        int idx = 0;
        for (size_t i = 4; i < slash; ++i) {
            if (name[i] < '0' || name[i] > '9') return false;
            idx = idx * 10 + (name[i] - '0');
        }
        return idx >= 1 && idx <= model.topo.backbone_convs;
    };
    std::vector<std::string> problems;
    std::vector<StateEntry*> to_copy;
    for (StateEntry& e : state) {
        if (!is_backbone(e.name)) continue;
        auto it = stored.find(e.name);
        if (it == stored.end()) {
            problems.push_back("missing backbone tensor: " + e.name);
            continue;
        }
        if (it->second.shape != e.shape) {
            problems.push_back("shape mismatch for " + e.name + ": file " +
                               shape_str(it->second.shape) + " vs model " + shape_str(e.shape));
            continue;
        }
        to_copy.push_back(&e);
    }
    if (!problems.empty()) {
        std::ostringstream msg;
        msg << "pretrained backbone " << path << " does not match model:";
        for (const std::string& p : problems) msg << "\n  " << p;
        throw CheckpointError(msg.str());
    }
    for (StateEntry* e : to_copy) {
        const StoredTensor& st = stored.at(e->name);
        for (size_t i = 0; i < st.data.size(); ++i)
            (*e->data)[i] = static_cast<double>(st.data[i]);
    }
}

}  // namespace shapednet
