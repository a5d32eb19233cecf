#include "topowarp/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace topowarp {

namespace {

constexpr char kMagic[4] = {'T', 'N', 'S', 'R'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "serialization assumes a little-endian host");

template <typename T>
void put(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
    T v;
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw IoError("tensor read: truncated stream");
    return v;
}

}  // namespace

void write_tnsr(std::ostream& os, const Tensor& t) {
    os.write(kMagic, 4);
    put<std::uint32_t>(os, kVersion);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t e : t.shape()) put<std::uint64_t>(os, static_cast<std::uint64_t>(e));
    os.write(reinterpret_cast<const char*>(t.data()),
             static_cast<std::streamsize>(t.numel() * sizeof(double)));
    if (!os) throw IoError("tensor write: stream failure");
}

Tensor read_tnsr(std::istream& is) {
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw IoError("tensor read: bad magic (not a TNSR stream)");
    const std::uint32_t version = get<std::uint32_t>(is);
    if (version != kVersion)
        throw IoError("tensor read: unsupported version " + std::to_string(version));
    const std::uint32_t rank = get<std::uint32_t>(is);
    if (rank > 8) throw IoError("tensor read: implausible rank " + std::to_string(rank));
    Shape shape(rank);
    for (std::uint32_t i = 0; i < rank; ++i)
        shape[i] = static_cast<std::size_t>(get<std::uint64_t>(is));
    std::vector<double> data(shape_numel(shape));
    is.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(double)));
    if (!is) throw IoError("tensor read: truncated data section");
    return Tensor::from_data(std::move(shape), std::move(data));
}

void save_tnsr(const std::string& path, const Tensor& t) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path);
    write_tnsr(os, t);
}

Tensor load_tnsr(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open for reading: " + path);
    return read_tnsr(is);
}

const Tensor& Checkpoint::tensor(const std::string& name) const {
    for (const auto& [n, t] : tensors)
        if (n == name) return t;
    throw IoError("checkpoint: no tensor named '" + name + "'");
}

const std::string* Checkpoint::config_value(const std::string& key) const {
    for (const auto& [k, v] : config)
        if (k == key) return &v;
    return nullptr;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    // serialize tensor blobs first so the manifest can state offsets
    std::ostringstream blob(std::ios::binary);
    std::vector<std::size_t> offsets;
    offsets.reserve(ckpt.tensors.size());
    for (const auto& [name, t] : ckpt.tensors) {
        offsets.push_back(static_cast<std::size_t>(blob.tellp()));
        write_tnsr(blob, t);
    }
    const std::string blob_str = blob.str();

    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path);
    os << "TOPOWARP-CKPT 1\n";
    for (const auto& [k, v] : ckpt.config) os << "config " << k << " = " << v << "\n";
    for (std::size_t i = 0; i < ckpt.tensors.size(); ++i) {
        const auto& [name, t] = ckpt.tensors[i];
        os << "tensor " << name << " " << offsets[i];
        os << " " << t.rank();
        for (std::size_t e : t.shape()) os << " " << e;
        os << "\n";
    }
    os << "data " << blob_str.size() << "\n";
    os.write(blob_str.data(), static_cast<std::streamsize>(blob_str.size()));
    if (!os) throw IoError("checkpoint write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open for reading: " + path);
    std::string line;
    if (!std::getline(is, line) || line != "TOPOWARP-CKPT 1")
        throw IoError("not a checkpoint file: " + path);

    Checkpoint ckpt;
    struct Entry {
        std::string name;
        std::size_t offset;
    };
    std::vector<Entry> manifest;
    std::size_t blob_size = 0;
    while (std::getline(is, line)) {
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (tag == "config") {
            std::string key, eq;
            ls >> key >> eq;
            if (eq != "=") throw IoError("checkpoint: malformed config line: " + line);
            std::string value;
            std::getline(ls, value);
            if (!value.empty() && value.front() == ' ') value.erase(0, 1);
            ckpt.config.emplace_back(key, value);
        } else if (tag == "tensor") {
            Entry e;
            std::size_t rank;
            ls >> e.name >> e.offset >> rank;
            // extents are re-read from the TNSR record itself; skip them here
            if (!ls) throw IoError("checkpoint: malformed tensor line: " + line);
            manifest.push_back(e);
        } else if (tag == "data") {
            ls >> blob_size;
            break;
        } else {
            throw IoError("checkpoint: unknown header line: " + line);
        }
    }
    const std::streampos blob_start = is.tellg();
    if (blob_start < 0) throw IoError("checkpoint: missing data section: " + path);
    for (const Entry& e : manifest) {
        is.seekg(blob_start + static_cast<std::streamoff>(e.offset));
        ckpt.tensors.emplace_back(e.name, read_tnsr(is));
    }
    (void)blob_size;
    return ckpt;
}

}  // namespace topowarp
