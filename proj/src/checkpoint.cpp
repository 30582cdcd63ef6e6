#include "vital/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iostream>
#include <iterator>

#include "vital/error.hpp"

namespace vital {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'V', 'I', 'T', 'A', 'L', 'C', 'K', 'P'};
constexpr std::uint8_t kDtypeF64 = 1;

template <typename T>
void put(std::vector<std::uint8_t>& out, T v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    out.insert(out.end(), p, p + sizeof(T));
}

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> b) : bytes_(b) {}

    template <typename T>
    T get() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    std::string str(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    bool done() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const {
        if (pos_ + n > bytes_.size()) throw DataError("truncated checkpoint");
    }
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> Checkpoint::serialize() const {
    std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
    put<std::uint32_t>(out, kVersion);
    const std::string h = header.dump();
    put<std::uint64_t>(out, h.size());
    out.insert(out.end(), h.begin(), h.end());
    put<std::uint64_t>(out, tensors.size());
    for (const auto& [name, t] : tensors) {
        put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out.insert(out.end(), name.begin(), name.end());
        put<std::uint8_t>(out, kDtypeF64);
        put<std::uint32_t>(out, 2);
        put<std::uint64_t>(out, t.rows());
        put<std::uint64_t>(out, t.cols());
        for (double v : t.values()) put<double>(out, v);
    }
    return out;
}

Checkpoint Checkpoint::deserialize(std::span<const std::uint8_t> bytes) {
    Reader r(bytes);
    if (r.str(8) != std::string(kMagic, 8)) throw DataError("not a checkpoint (bad magic)");
    const auto version = r.get<std::uint32_t>();
    if (version != kVersion) throw DataError("unsupported checkpoint version " + std::to_string(version));
    Checkpoint ck;
    const auto hlen = r.get<std::uint64_t>();
    ck.header = nlohmann::json::parse(r.str(hlen));
    const auto n = r.get<std::uint64_t>();
    for (std::uint64_t i = 0; i < n; ++i) {
        const auto nl = r.get<std::uint32_t>();
        std::string name = r.str(nl);
        if (r.get<std::uint8_t>() != kDtypeF64) throw DataError("unsupported dtype in record " + name);
        const auto ndim = r.get<std::uint32_t>();
        if (ndim != 2) throw DataError("record " + name + " is not 2-D");
        const auto rows = r.get<std::uint64_t>();
        const auto cols = r.get<std::uint64_t>();
        Tensor t(rows, cols);
        for (auto& v : t.values()) v = r.get<double>();
        ck.tensors.emplace(std::move(name), std::move(t));
    }
    if (!r.done()) throw DataError("trailing bytes after checkpoint records");
    return ck;
}

void Checkpoint::save(const std::filesystem::path& path) const {
    const auto bytes = serialize();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read checkpoint " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize(bytes);
}

std::set<std::string> Checkpoint::namespaces() const {
    std::set<std::string> out;
    for (const auto& [name, t] : tensors) out.insert(name.substr(0, name.find('.')));
    return out;
}

bool Checkpoint::has_namespace(const std::string& ns) const { return namespaces().count(ns) > 0; }

std::size_t Checkpoint::parameter_count(const std::string& ns) const {
    std::size_t n = 0;
    for (const auto& [name, t] : tensors)
        if (ns.empty() || name.substr(0, name.find('.')) == ns) n += t.size();
    return n;
}

namespace {

Checkpoint strip_scaffolding(const Checkpoint& ckpt) {
    Checkpoint out;
    out.header = ckpt.header;
    out.header.erase("scaffold");
    for (const auto& [name, t] : ckpt.tensors)
        if (name.substr(0, name.find('.')) != Checkpoint::kScaffoldNamespace) out.tensors.emplace(name, t);
    return out;
}

}  // namespace

Checkpoint detach_scaffolding(const Checkpoint& ckpt, bool* was_noop) {
    const bool present = ckpt.has_namespace(Checkpoint::kScaffoldNamespace) || ckpt.header.contains("scaffold");
    if (was_noop) *was_noop = !present;
    if (!present) {
        std::cerr << "warning: checkpoint already detached; nothing to drop\n";
        return ckpt;
    }
    return strip_scaffolding(ckpt);
}

Checkpoint reattach_scaffolding(const Checkpoint& deployed, const Checkpoint& source) {
    if (!source.header.contains("scaffold")) throw DataError("source checkpoint carries no scaffolding");
    Checkpoint out = strip_scaffolding(deployed);
    out.header["scaffold"] = source.header["scaffold"];
    for (const auto& [name, t] : source.tensors)
        if (name.substr(0, name.find('.')) == Checkpoint::kScaffoldNamespace) out.tensors.emplace(name, t);
    return out;
}

}  // namespace vital
