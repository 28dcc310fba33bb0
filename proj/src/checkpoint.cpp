#include "fishmerge/checkpoint.hpp"

#include <nlohmann/json.hpp>

#include <bit>
#include <cstring>
#include <fstream>

namespace fishmerge {

static_assert(std::endian::native == std::endian::little,
              "FMRG files are little-endian; big-endian hosts are unsupported");

namespace {

// std::map-backed json keeps keys sorted, so dumped headers are canonical.
using json = nlohmann::json;

constexpr char kMagic[4] = {'F', 'M', 'R', 'G'};
constexpr std::uint32_t kVersion = 1;

// Keys inserted in sorted order so the header is canonical byte-for-byte.
json make_header(const FileContents& c) {
    json header;
    header["fisher"] = c.fisher;
    if (c.fisher) {
        json meta;
        meta["k"] = c.fisher_meta.k;
        meta["mode"] = c.fisher_meta.mode;
        meta["n_examples_used"] = c.fisher_meta.n_examples_used;
        header["fisher_meta"] = std::move(meta);
    }
    header["format_version"] = kVersion;
    header["lineage_id"] = c.params.lineage_id;
    json tags;
    for (const auto& [name, role] : c.tags) tags[name] = role_name(role);
    header["role_tags"] = std::move(tags);
    json table = json::array();
    std::int64_t offset = 0;
    for (const auto& [name, t] : c.params.entries) {
        json row;
        row["byte_offset"] = offset;
        row["name"] = name;
        row["shape"] = t.shape;
        table.push_back(std::move(row));
        offset += t.size() * 8;
    }
    header["tensors"] = std::move(table);
    return header;
}

template <typename T>
void write_le(std::ofstream& out, T value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

}  // namespace

void save_file(const FileContents& c, const std::filesystem::path& path) {
    validate(c.params);
    for (const auto& [name, t] : c.params.entries) {
        if (!c.tags.contains(name))
            throw DataError("missing role tag for tensor \"" + name + "\"");
    }

    const std::string header = make_header(c).dump();

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("unwritable path: " + path.string());

    out.write(kMagic, 4);
    write_le(out, kVersion);
    write_le(out, static_cast<std::uint64_t>(header.size()));
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    for (const auto& [name, t] : c.params.entries) {
        out.write(reinterpret_cast<const char*>(t.data.data()),
                  static_cast<std::streamsize>(t.data.size() * 8));
    }
    out.flush();
    if (!out) throw DataError("write failed: " + path.string());
}

FileContents load_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open file: " + path.string());

    char magic[4];
    std::uint32_t version = 0;
    std::uint64_t header_len = 0;
    in.read(magic, 4);
    in.read(reinterpret_cast<char*>(&version), 4);
    in.read(reinterpret_cast<char*>(&header_len), 8);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw DataError("malformed header: bad magic in " + path.string());
    if (version != kVersion)
        throw DataError("unsupported version " + std::to_string(version) + " in " + path.string());

    std::string header_text(header_len, '\0');
    in.read(header_text.data(), static_cast<std::streamsize>(header_len));
    if (!in) throw DataError("malformed header: truncated header in " + path.string());

    json header;
    try {
        header = json::parse(header_text);
    } catch (const json::exception& e) {
        throw DataError("malformed header: " + std::string(e.what()));
    }

    std::string payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    FileContents c;
    try {
        if (header.at("format_version").get<std::uint32_t>() != kVersion)
            throw DataError("unsupported version in header of " + path.string());
        c.params.lineage_id = header.at("lineage_id").get<std::string>();
        c.fisher = header.at("fisher").get<bool>();
        if (c.fisher) {
            const auto& meta = header.at("fisher_meta");
            c.fisher_meta.k = meta.at("k").get<std::int64_t>();
            c.fisher_meta.mode = meta.at("mode").get<std::string>();
            c.fisher_meta.n_examples_used = meta.at("n_examples_used").get<std::int64_t>();
        }
        for (const auto& [name, tag] : header.at("role_tags").items())
            c.tags[name] = role_from_name(tag.get<std::string>());

        std::int64_t expected_offset = 0;
        for (const auto& row : header.at("tensors")) {
            const auto name = row.at("name").get<std::string>();
            const auto shape = row.at("shape").get<std::vector<std::int64_t>>();
            const auto offset = row.at("byte_offset").get<std::int64_t>();
            if (name.empty()) throw DataError("malformed header: empty tensor name");
            if (c.params.entries.contains(name))
                throw DataError("malformed header: duplicate tensor \"" + name + "\"");
            if (offset != expected_offset)
                throw DataError("malformed header: offsets must be ascending and contiguous");
            Tensor t = make_tensor(shape);
            const std::int64_t bytes = t.size() * 8;
            if (offset + bytes > static_cast<std::int64_t>(payload.size()))
                throw DataError("truncated payload in " + path.string());
            std::memcpy(t.data.data(), payload.data() + offset, static_cast<std::size_t>(bytes));
            c.params.entries.emplace(name, std::move(t));
            expected_offset = offset + bytes;
        }
        if (expected_offset != static_cast<std::int64_t>(payload.size()))
            throw DataError("payload size mismatch in " + path.string());
    } catch (const json::exception& e) {
        throw DataError("malformed header: " + std::string(e.what()));
    }

    validate(c.params);
    for (const auto& [name, t] : c.params.entries) {
        if (!c.tags.contains(name))
            throw DataError("malformed header: missing role tag for \"" + name + "\"");
    }
    return c;
}

void save_checkpoint(const ParameterSet& params, const RoleTags& role_tags,
                     const std::filesystem::path& path) {
    FileContents c;
    c.params = params;
    c.tags = role_tags;
    c.fisher = false;
    save_file(c, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    FileContents c = load_file(path);
    if (c.fisher)
        throw DataError("expected a checkpoint but " + path.string() + " is a Fisher diagonal");
    return Checkpoint{std::move(c.params), std::move(c.tags)};
}

CompatibilityPartition check_merge_compatibility(std::span<const Checkpoint> sets) {
    if (sets.empty()) throw DataError("check_merge_compatibility: empty set list");
    for (const auto& s : sets) {
        if (s.params.lineage_id != sets.front().params.lineage_id)
            throw DataError("lineage mismatch: \"" + s.params.lineage_id + "\" vs \"" +
                            sets.front().params.lineage_id + "\"");
    }

    CompatibilityPartition out;
    for (const auto& [name, t0] : sets.front().params.entries) {
        bool body_everywhere = true;
        for (const auto& s : sets) {
            const auto it = s.params.entries.find(name);
            const auto tag = s.tags.find(name);
            if (it == s.params.entries.end() || tag == s.tags.end() || tag->second != Role::Body) {
                body_everywhere = false;
                break;
            }
        }
        if (!body_everywhere) continue;
        for (const auto& s : sets) {
            if (!s.params.entries.at(name).same_shape(t0))
                throw DataError("shape conflict on shared body tensor \"" + name + "\"");
        }
        out.mergeable.push_back(name);
    }

    out.private_names.resize(sets.size());
    for (std::size_t i = 0; i < sets.size(); ++i) {
        for (const auto& [name, t] : sets[i].params.entries) {
            if (std::find(out.mergeable.begin(), out.mergeable.end(), name) ==
                out.mergeable.end())
                out.private_names[i].push_back(name);
        }
    }
    return out;
}

}  // namespace fishmerge
