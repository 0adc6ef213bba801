#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "deephums/encoder.hpp"

namespace deephums {

static_assert(std::endian::native == std::endian::little,
              "parameter files are little-endian; big-endian hosts are not supported");

namespace detail {

constexpr char kParamsMagic[4] = {'D', 'H', 'P', 'M'};
constexpr std::uint32_t kParamsVersion = 1;

template <typename T>
void write_pod(std::ostream& out, const T& value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
void read_pod(std::istream& in, T& value, const std::string& what) {
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in) throw ParseError("parameter file truncated while reading " + what);
}

inline std::string config_to_text(const EncoderConfig& config, bool submotion) {
    std::ostringstream out;
    out << "cell=" << to_string(config.cell) << "\n"
        << "input_width=" << config.input_width << "\n"
        << "hidden_size=" << config.hidden_size << "\n"
        << "num_layers=" << config.num_layers << "\n"
        << "embedding_dim=" << config.embedding_dim << "\n"
        << "readout=" << to_string(config.readout) << "\n";
    if (config.class_count) out << "class_count=" << *config.class_count << "\n";
    out << "submotion=" << (submotion ? 1 : 0) << "\n";
    return out.str();
}

inline void config_from_text(const std::string& text, EncoderConfig& config, bool& submotion) {
    std::istringstream in(text);
    std::string line;
    submotion = false;
    while (std::getline(in, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = line.substr(0, eq);
        const std::string value = line.substr(eq + 1);
        try {
            if (key == "cell")
                config.cell = cell_from_string(value);
            else if (key == "input_width")
                config.input_width = std::stoi(value);
            else if (key == "hidden_size")
                config.hidden_size = std::stoi(value);
            else if (key == "num_layers")
                config.num_layers = std::stoi(value);
            else if (key == "embedding_dim")
                config.embedding_dim = std::stoi(value);
            else if (key == "readout")
                config.readout = readout_from_string(value);
            else if (key == "class_count")
                config.class_count = std::stoi(value);
            else if (key == "submotion")
                submotion = value == "1" || value == "true";
        } catch (const std::invalid_argument&) {
            throw ParseError("parameter file: bad config value for '" + key + "'");
        }
    }
}

}  // namespace detail

/// Writes a versioned parameter container: magic + version, the encoder
/// config as key-value text, then every tensor (name, shape, float32 data)
/// in declared order.
inline void save_params(const std::filesystem::path& path, const EncoderParams<float>& params,
                        bool submotion = false) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write parameter file: " + path.string());
    out.write(detail::kParamsMagic, 4);
    detail::write_pod(out, detail::kParamsVersion);
    const std::string config_text = detail::config_to_text(params.config(), submotion);
    detail::write_pod(out, static_cast<std::uint32_t>(config_text.size()));
    out.write(config_text.data(), static_cast<std::streamsize>(config_text.size()));
    detail::write_pod(out, static_cast<std::uint32_t>(params.tensors().size()));
    for (std::size_t i = 0; i < params.tensors().size(); ++i) {
        const auto& t = params.tensors()[i];
        detail::write_pod(out, static_cast<std::uint32_t>(t.name.size()));
        out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
        detail::write_pod(out, static_cast<std::uint32_t>(t.rows));
        detail::write_pod(out, static_cast<std::uint32_t>(t.cols));
        out.write(reinterpret_cast<const char*>(params.data().data() + t.offset),
                  static_cast<std::streamsize>(t.size() * sizeof(float)));
    }
    if (!out) throw IoError("write failed: " + path.string());
}

struct LoadedParams {
    EncoderParams<float> params;
    bool submotion = false;
};

/// Reads a parameter container; rejects bad magic, unsupported versions,
/// layout mismatches, truncation and trailing garbage, leaving no partially
/// constructed state behind.
inline LoadedParams load_params(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ArgumentError("cannot open parameter file: " + path.string());
    char magic[4] = {};
    in.read(magic, 4);
    if (!in || std::memcmp(magic, detail::kParamsMagic, 4) != 0)
        throw ParseError(path.string() + ": not a parameter file (bad magic)");
    std::uint32_t version = 0;
    detail::read_pod(in, version, "version");
    if (version != detail::kParamsVersion)
        throw ParseError(path.string() + ": unsupported parameter file version " +
                      std::to_string(version));
    std::uint32_t config_len = 0;
    detail::read_pod(in, config_len, "config length");
    std::string config_text(config_len, '\0');
    in.read(config_text.data(), config_len);
    if (!in) throw ParseError(path.string() + ": truncated config block");

    EncoderConfig config;
    bool submotion = false;
    detail::config_from_text(config_text, config, submotion);
    config.validate();

    EncoderParams<float> params(config);
    std::uint32_t tensor_count = 0;
    detail::read_pod(in, tensor_count, "tensor count");
    if (tensor_count != params.tensors().size())
        throw ParseError(path.string() + ": expected " + std::to_string(params.tensors().size()) +
                      " tensors, file declares " + std::to_string(tensor_count));
    for (std::size_t i = 0; i < params.tensors().size(); ++i) {
        const auto& t = params.tensors()[i];
        std::uint32_t name_len = 0;
        detail::read_pod(in, name_len, "tensor name length");
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        std::uint32_t rows = 0, cols = 0;
        detail::read_pod(in, rows, "tensor rows");
        detail::read_pod(in, cols, "tensor cols");
        if (!in || name != t.name || static_cast<int>(rows) != t.rows ||
            static_cast<int>(cols) != t.cols)
            throw ParseError(path.string() + ": tensor " + std::to_string(i) + " ('" + name +
                          "') does not match the declared layout");
        in.read(reinterpret_cast<char*>(params.data().data() + t.offset),
                static_cast<std::streamsize>(t.size() * sizeof(float)));
        if (!in) throw ParseError(path.string() + ": truncated tensor payload for '" + t.name + "'");
    }
    in.peek();
    if (!in.eof()) throw ParseError(path.string() + ": trailing data after last tensor");
    return {std::move(params), submotion};
}

/// Load with a config expectation, e.g. to refuse parameters trained with a
/// different embedding width.
inline LoadedParams load_params_expecting(const std::filesystem::path& path,
                                          const EncoderConfig& expected) {
    LoadedParams loaded = load_params(path);
    if (!(loaded.params.config() == expected))
        throw ConfigError(path.string() + ": parameter file config does not match expected config");
    return loaded;
}

}  // namespace deephums
