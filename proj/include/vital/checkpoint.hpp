#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vital/tensor.hpp"

namespace vital {

// Versioned binary container:
//   "VITALCKP" | u32 version | u64 header bytes | JSON header |
//   u64 record count | records sorted by name, each
//   u32 name bytes | name | u8 dtype (1 = f64) | u32 ndim | u64 dims[ndim] | raw little-endian values
// Records are keyed by dotted names whose first component is the namespace.
struct Checkpoint {
    static constexpr std::uint32_t kVersion = 1;
    static constexpr const char* kScaffoldNamespace = "scaffold";

    nlohmann::json header = nlohmann::json::object();
    std::map<std::string, Tensor> tensors;

    std::vector<std::uint8_t> serialize() const;
    static Checkpoint deserialize(std::span<const std::uint8_t> bytes);
    void save(const std::filesystem::path& path) const;
    static Checkpoint load(const std::filesystem::path& path);

    std::set<std::string> namespaces() const;
    bool has_namespace(const std::string& ns) const;
    std::size_t parameter_count(const std::string& ns = "") const;
    bool operator==(const Checkpoint&) const = default;
};

// Drops every scaffold record and the scaffold header section. Already
// detached input is returned unchanged and `*was_noop` is set.
Checkpoint detach_scaffolding(const Checkpoint& ckpt, bool* was_noop = nullptr);
// Copies the scaffold namespace and header section from `source` onto `deployed`.
Checkpoint reattach_scaffolding(const Checkpoint& deployed, const Checkpoint& source);

}  // namespace vital
