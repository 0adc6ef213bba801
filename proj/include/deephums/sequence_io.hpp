#pragma once

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "deephums/skeleton.hpp"

namespace deephums {

namespace detail {

inline std::vector<std::string_view> split_ws(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
        std::size_t start = i;
        while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
        if (i > start) out.push_back(line.substr(start, i - start));
    }
    return out;
}

inline bool parse_double(std::string_view tok, double& out) {
    const char* end = tok.data() + tok.size();
    auto [p, ec] = std::from_chars(tok.data(), end, out);
    return ec == std::errc() && p == end;
}

inline bool parse_int(std::string_view tok, int& out) {
    const char* end = tok.data() + tok.size();
    auto [p, ec] = std::from_chars(tok.data(), end, out);
    return ec == std::errc() && p == end;
}

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

/// key=value header tokens ("joints=25" -> {"joints", "25"})
inline bool split_kv(std::string_view tok, std::string_view& key, std::string_view& value) {
    const auto eq = tok.find('=');
    if (eq == std::string_view::npos) return false;
    key = tok.substr(0, eq);
    value = tok.substr(eq + 1);
    return true;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Topology files:  "#topology v1 joints=<J> root=<r>" then "parent child" rows
// ---------------------------------------------------------------------------

inline SkeletonTopology load_topology(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ArgumentError("cannot open topology file: " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw ParseError(path.string() + ":1: empty topology file");
    auto tokens = detail::split_ws(line);
    if (tokens.size() < 2 || tokens[0] != "#topology" || tokens[1] != "v1")
        throw ParseError(path.string() + ":1: expected '#topology v1' header");
    SkeletonTopology topo;
    bool have_joints = false;
    for (std::size_t i = 2; i < tokens.size(); ++i) {
        std::string_view key, value;
        if (!detail::split_kv(tokens[i], key, value))
            throw ParseError(path.string() + ":1: malformed header token '" + std::string(tokens[i]) + "'");
        int v = 0;
        if (!detail::parse_int(value, v))
            throw ParseError(path.string() + ":1: non-integer value for '" + std::string(key) + "'");
        if (key == "joints") {
            topo.joint_count = v;
            have_joints = true;
        } else if (key == "root") {
            topo.root_joint = v;
        }
    }
    if (!have_joints) throw ParseError(path.string() + ":1: missing joints= field");
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        auto toks = detail::split_ws(line);
        if (toks.empty() || toks[0][0] == '#') continue;
        int p = 0, c = 0;
        if (toks.size() != 2 || !detail::parse_int(toks[0], p) || !detail::parse_int(toks[1], c))
            throw ParseError(path.string() + ":" + std::to_string(line_no) +
                             ": expected 'parent child' pair");
        topo.bone_edges.emplace_back(p, c);
    }
    try {
        topo.validate();
    } catch (const ValidationError& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
    return topo;
}

inline void save_topology(const std::filesystem::path& path, const SkeletonTopology& topo) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write topology file: " + path.string());
    out << "#topology v1 joints=" << topo.joint_count << " root=" << topo.root_joint << "\n";
    for (const auto& [p, c] : topo.bone_edges) out << p << " " << c << "\n";
    if (!out) throw IoError("write failed: " + path.string());
}

// ---------------------------------------------------------------------------
// Canonical bone length files: "#bones v1 joints=<J>" then "parent child length"
// ---------------------------------------------------------------------------

/// Lengths are stored aligned with topology.bone_edges order.
inline std::vector<double> load_bone_lengths(const std::filesystem::path& path,
                                             const SkeletonTopology& topo) {
    std::ifstream in(path);
    if (!in) throw ArgumentError("cannot open bone length file: " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw ParseError(path.string() + ":1: empty bone length file");
    auto tokens = detail::split_ws(line);
    if (tokens.size() < 2 || tokens[0] != "#bones" || tokens[1] != "v1")
        throw ParseError(path.string() + ":1: expected '#bones v1' header");
    std::map<std::pair<int, int>, double> by_edge;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        auto toks = detail::split_ws(line);
        if (toks.empty() || toks[0][0] == '#') continue;
        int p = 0, c = 0;
        double len = 0.0;
        if (toks.size() != 3 || !detail::parse_int(toks[0], p) || !detail::parse_int(toks[1], c) ||
            !detail::parse_double(toks[2], len))
            throw ParseError(path.string() + ":" + std::to_string(line_no) +
                             ": expected 'parent child length'");
        by_edge[{p, c}] = len;
    }
    std::vector<double> lengths;
    lengths.reserve(topo.bone_edges.size());
    for (const auto& e : topo.bone_edges) {
        auto it = by_edge.find(e);
        if (it == by_edge.end())
            throw ValidationError(path.string() + ": no length for bone " + std::to_string(e.first) +
                                  "->" + std::to_string(e.second));
        lengths.push_back(it->second);
    }
    return lengths;
}

inline void save_bone_lengths(const std::filesystem::path& path, const SkeletonTopology& topo,
                              const std::vector<double>& lengths) {
    if (lengths.size() != topo.bone_edges.size())
        throw ArgumentError("bone length count does not match topology");
    std::ofstream out(path);
    if (!out) throw IoError("cannot write bone length file: " + path.string());
    out << "#bones v1 joints=" << topo.joint_count << "\n";
    for (std::size_t i = 0; i < lengths.size(); ++i)
        out << topo.bone_edges[i].first << " " << topo.bone_edges[i].second << " "
            << detail::format_double(lengths[i]) << "\n";
    if (!out) throw IoError("write failed: " + path.string());
}

// ---------------------------------------------------------------------------
// Sequence files (one per sequence):
//   #skeleton v1 joints=<J> fps=<f> [label=<int>] [performer=<str>]
//   #missing <frame>:<joint> ...          (optional, repeatable)
//   x0 y0 z0 x1 y1 z1 ...                 (one line per frame, 3J reals)
// Missing joints may be written either as literal "nan nan nan" or with
// filled coordinates; the #missing lines are authoritative either way.
// ---------------------------------------------------------------------------

inline SkeletonSequence parse_sequence(std::istream& in, const std::string& source_name,
                                       const SkeletonTopology& topology, const std::string& id) {
    std::string line;
    if (!std::getline(in, line)) throw ParseError(source_name + ":1: empty sequence file");
    auto tokens = detail::split_ws(line);
    if (tokens.size() < 2 || tokens[0] != "#skeleton" || tokens[1] != "v1")
        throw ParseError(source_name + ":1: expected '#skeleton v1' header");

    SkeletonSequence seq;
    seq.id = id;
    seq.topology = topology;
    int joints = -1;
    bool have_fps = false;
    for (std::size_t i = 2; i < tokens.size(); ++i) {
        std::string_view key, value;
        if (!detail::split_kv(tokens[i], key, value))
            throw ParseError(source_name + ":1: malformed header token '" + std::string(tokens[i]) + "'");
        if (key == "joints") {
            if (!detail::parse_int(value, joints))
                throw ParseError(source_name + ":1: non-integer joints= value");
        } else if (key == "fps") {
            if (!detail::parse_double(value, seq.fps))
                throw ParseError(source_name + ":1: non-numeric fps= value");
            have_fps = true;
        } else if (key == "label") {
            int label = 0;
            if (!detail::parse_int(value, label))
                throw ParseError(source_name + ":1: non-integer label= value");
            seq.class_label = label;
        } else if (key == "performer") {
            seq.performer_id = std::string(value);
        }
    }
    if (joints < 0) throw ParseError(source_name + ":1: missing joints= field");
    if (!have_fps) throw ParseError(source_name + ":1: missing fps= field");
    if (joints != topology.joint_count)
        throw ValidationError(source_name + ": header declares " + std::to_string(joints) +
                              " joints, topology expects " + std::to_string(topology.joint_count));
    if (!(seq.fps > 0.0)) throw ValidationError(source_name + ": fps must be positive");

    std::vector<std::pair<int, int>> missing_pairs;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        auto toks = detail::split_ws(line);
        if (toks.empty()) continue;
        if (toks[0][0] == '#') {
            if (toks[0] == "#missing") {
                for (std::size_t i = 1; i < toks.size(); ++i) {
                    const auto colon = toks[i].find(':');
                    int f = 0, j = 0;
                    if (colon == std::string_view::npos ||
                        !detail::parse_int(toks[i].substr(0, colon), f) ||
                        !detail::parse_int(toks[i].substr(colon + 1), j))
                        throw ParseError(source_name + ":" + std::to_string(line_no) +
                                         ": malformed #missing entry '" + std::string(toks[i]) + "'");
                    missing_pairs.emplace_back(f, j);
                }
            }
            continue;  // other # lines are comments
        }
        if (static_cast<int>(toks.size()) != 3 * joints)
            throw ParseError(source_name + ":" + std::to_string(line_no) + ": expected " +
                             std::to_string(3 * joints) + " values, got " +
                             std::to_string(toks.size()));
        JointMatrix frame(joints, 3);
        for (int j = 0; j < joints; ++j)
            for (int k = 0; k < 3; ++k) {
                double v = 0.0;
                const auto& tok = toks[static_cast<std::size_t>(3 * j + k)];
                if (!detail::parse_double(tok, v))
                    throw ParseError(source_name + ":" + std::to_string(line_no) +
                                     ": bad number '" + std::string(tok) + "'");
                frame(j, k) = v;
            }
        seq.frames.push_back(std::move(frame));
    }

    const int n = seq.frame_count();
    if (n < 2) throw ValidationError(source_name + ": sequence needs at least 2 frames");

    MissingMask mask(n, joints);
    for (const auto& [f, j] : missing_pairs) {
        if (f < 0 || f >= n || j < 0 || j >= joints)
            throw ValidationError(source_name + ": #missing entry " + std::to_string(f) + ":" +
                                  std::to_string(j) + " out of range");
        mask.set(f, j);
    }
    // every non-finite coordinate must be covered by a missing flag
    for (int t = 0; t < n; ++t)
        for (int j = 0; j < joints; ++j)
            if (!seq.frames[static_cast<std::size_t>(t)].row(j).allFinite() && !mask.at(t, j))
                throw ValidationError(source_name + ": non-finite coordinate at frame " +
                                      std::to_string(t) + " joint " + std::to_string(j) +
                                      " without a missing flag");
    if (mask.any()) {
        apply_missing_fill(seq.frames, mask, topology.root_joint);
        seq.missing_mask = std::move(mask);
    }
    validate_sequence(seq);
    return seq;
}

inline SkeletonSequence load_sequence(const std::filesystem::path& path,
                                      const SkeletonTopology& topology) {
    std::ifstream in(path);
    if (!in) throw ArgumentError("cannot open sequence file: " + path.string());
    return parse_sequence(in, path.string(), topology, path.stem().string());
}

inline void write_sequence(std::ostream& out, const SkeletonSequence& seq) {
    out << "#skeleton v1 joints=" << seq.joint_count() << " fps=" << detail::format_double(seq.fps);
    if (seq.class_label) out << " label=" << *seq.class_label;
    if (seq.performer_id) out << " performer=" << *seq.performer_id;
    out << "\n";
    if (seq.missing_mask && seq.missing_mask->any()) {
        int per_line = 0;
        for (int t = 0; t < seq.frame_count(); ++t)
            for (int j = 0; j < seq.joint_count(); ++j) {
                if (!seq.missing_mask->at(t, j)) continue;
                out << (per_line == 0 ? "#missing" : "") << " " << t << ":" << j;
                if (++per_line == 16) {
                    out << "\n";
                    per_line = 0;
                }
            }
        if (per_line != 0) out << "\n";
    }
    for (const auto& frame : seq.frames) {
        for (int j = 0; j < frame.rows(); ++j)
            for (int k = 0; k < 3; ++k) {
                if (j != 0 || k != 0) out << " ";
                out << detail::format_double(frame(j, k));
            }
        out << "\n";
    }
}

inline void save_sequence(const std::filesystem::path& path, const SkeletonSequence& seq) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write sequence file: " + path.string());
    write_sequence(out, seq);
    if (!out) throw IoError("write failed: " + path.string());
}

// ---------------------------------------------------------------------------
// Manifests: tab-separated "path  id  label  performer  split [provenance]".
// '-' stands for an absent label/performer.
// ---------------------------------------------------------------------------

struct ManifestEntry {
    std::string path;
    std::string id;
    std::optional<int> label;
    std::optional<std::string> performer;
    std::string split;  // "train" or "test"
    std::optional<std::string> provenance;
};

struct DatasetManifest {
    std::vector<ManifestEntry> entries;

    void validate() const {
        std::unordered_map<std::string, int> seen;
        for (const auto& e : entries) {
            if (e.split != "train" && e.split != "test")
                throw ValidationError("manifest: entry '" + e.id + "' has split '" + e.split +
                                      "', expected train or test");
            if (++seen[e.id] > 1) throw ValidationError("manifest: duplicate id '" + e.id + "'");
        }
    }
};

inline DatasetManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ArgumentError("cannot open manifest: " + path.string());
    DatasetManifest manifest;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> fields;
        std::size_t start = 0;
        while (true) {
            const auto tab = line.find('\t', start);
            fields.push_back(line.substr(start, tab == std::string::npos ? tab : tab - start));
            if (tab == std::string::npos) break;
            start = tab + 1;
        }
        if (fields.size() != 5 && fields.size() != 6)
            throw ParseError(path.string() + ":" + std::to_string(line_no) +
                             ": expected 5 or 6 tab-separated fields, got " +
                             std::to_string(fields.size()));
        ManifestEntry e;
        e.path = fields[0];
        e.id = fields[1];
        if (fields[2] != "-") {
            int label = 0;
            if (!detail::parse_int(fields[2], label))
                throw ParseError(path.string() + ":" + std::to_string(line_no) +
                                 ": bad label '" + fields[2] + "'");
            e.label = label;
        }
        if (fields[3] != "-") e.performer = fields[3];
        e.split = fields[4];
        if (fields.size() == 6) e.provenance = fields[5];
        manifest.entries.push_back(std::move(e));
    }
    manifest.validate();
    return manifest;
}

inline void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write manifest: " + path.string());
    for (const auto& e : manifest.entries) {
        out << e.path << "\t" << e.id << "\t" << (e.label ? std::to_string(*e.label) : "-") << "\t"
            << (e.performer ? *e.performer : "-") << "\t" << e.split;
        if (e.provenance) out << "\t" << *e.provenance;
        out << "\n";
    }
    if (!out) throw IoError("write failed: " + path.string());
}

/// A manifest resolved into memory: sequences plus their split tags.
struct Dataset {
    SkeletonTopology topology;
    std::vector<SkeletonSequence> sequences;
    std::vector<std::string> splits;  // parallel to sequences
    std::unordered_map<std::string, int> id_to_index;

    std::vector<int> split_indices(const std::string& split) const {
        std::vector<int> out;
        for (int i = 0; i < static_cast<int>(sequences.size()); ++i)
            if (splits[static_cast<std::size_t>(i)] == split) out.push_back(i);
        return out;
    }
};

/// Loads every manifest entry (paths resolved against base_dir). Manifest
/// label/performer values override whatever the sequence files carry.
inline Dataset load_dataset(const DatasetManifest& manifest, const std::filesystem::path& base_dir,
                            const SkeletonTopology& topology) {
    manifest.validate();
    Dataset ds;
    ds.topology = topology;
    ds.sequences.reserve(manifest.entries.size());
    for (const auto& e : manifest.entries) {
        std::filesystem::path p(e.path);
        if (p.is_relative()) p = base_dir / p;
        SkeletonSequence seq = load_sequence(p, topology);
        seq.id = e.id;
        if (e.label) seq.class_label = e.label;
        if (e.performer) seq.performer_id = e.performer;
        ds.id_to_index[seq.id] = static_cast<int>(ds.sequences.size());
        ds.sequences.push_back(std::move(seq));
        ds.splits.push_back(e.split);
    }
    return ds;
}

}  // namespace deephums
