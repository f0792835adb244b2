/**
 * @file model_io.hpp
 * @brief Binary model files (magic VLEN) and their JSON metadata sidecar.
 */
#pragma once

#include "vle/detail/binary_io.hpp"
#include "vle/neural/train.hpp"

#include <nlohmann/json.hpp>

#include <cstring>
#include <fstream>
#include <string>

namespace vle::nn {

inline constexpr std::uint32_t model_format_version = 1;

namespace detail {

inline void write_block(vle::detail::ByteWriter& w, const double* d, Eigen::Index n)
{
    w.u64(static_cast<std::uint64_t>(n));
    for (Eigen::Index i = 0; i < n; ++i)
        w.f64(d[i]);
}

inline void read_block(vle::detail::ByteReader& r, double* d, Eigen::Index n)
{
    const auto len = r.u64();
    if (len != static_cast<std::uint64_t>(n))
        throw IoError("model file parameter block has the wrong size");
    for (Eigen::Index i = 0; i < n; ++i)
        d[i] = r.f64();
}

} // namespace detail

inline void save_model(const Model& m, std::ostream& os)
{
    vle::detail::ByteWriter w(os);
    os.write("VLEN", 4);
    w.u32(model_format_version);
    const auto& a = m.net.arch;
    w.u32(static_cast<std::uint32_t>(a.inputs));
    w.u32(static_cast<std::uint32_t>(a.outputs));
    w.u32(static_cast<std::uint32_t>(a.hidden.size()));
    for (const auto& l : a.hidden) {
        w.u32(static_cast<std::uint32_t>(l.width));
        w.u32(static_cast<std::uint32_t>(l.activation));
        w.u8(l.batch_norm ? 1 : 0);
        w.f64(l.dropout_keep);
    }
    detail::write_block(w, m.scaler.mean.data(), m.scaler.mean.size());
    detail::write_block(w, m.scaler.std.data(), m.scaler.std.size());
    const auto& p = m.net.params;
    for (std::size_t i = 0; i < a.layers(); ++i) {
        detail::write_block(w, p.w[i].data(), p.w[i].size());
        detail::write_block(w, p.b[i].data(), p.b[i].size());
        detail::write_block(w, p.gamma[i].data(), p.gamma[i].size());
        detail::write_block(w, p.beta[i].data(), p.beta[i].size());
        detail::write_block(w, p.run_mean[i].data(), p.run_mean[i].size());
        detail::write_block(w, p.run_var[i].data(), p.run_var[i].size());
        w.f64(p.slope[i]);
    }
    if (!os)
        throw IoError("failed writing model");
}

inline Model load_model(std::istream& is)
{
    char magic[4] = {};
    if (!is.read(magic, 4) || std::memcmp(magic, "VLEN", 4) != 0)
        throw IoError("not a model file (bad magic)");
    vle::detail::ByteReader r(is);
    const auto version = r.u32();
    if (version != model_format_version)
        throw IoError("unsupported model format version " + std::to_string(version));
    Architecture a;
    a.inputs = r.u32();
    a.outputs = r.u32();
    const auto depth = r.u32();
    if (a.inputs == 0 || a.inputs > 4096 || a.outputs == 0 || a.outputs > 4096 || depth > 1024)
        throw IoError("model file has an implausible architecture");
    for (std::uint32_t i = 0; i < depth; ++i) {
        LayerSpec l;
        l.width = r.u32();
        const auto act = r.u32();
        if (act >= all_activations.size() || l.width == 0 || l.width > (1u << 20))
            throw IoError("model file has an invalid layer");
        l.activation = all_activations[act];
        l.batch_norm = r.u8() != 0;
        l.dropout_keep = r.f64();
        a.hidden.push_back(l);
    }
    try {
        a.validate();
    } catch (const Error& e) {
        throw IoError(std::string("model file has an invalid architecture: ") + e.what());
    }
    Model m;
    m.scaler.mean.resize(static_cast<Eigen::Index>(a.inputs));
    m.scaler.std.resize(static_cast<Eigen::Index>(a.inputs));
    detail::read_block(r, m.scaler.mean.data(), m.scaler.mean.size());
    detail::read_block(r, m.scaler.std.data(), m.scaler.std.size());
    Rng rng(0);
    m.net.arch = a;
    m.net.params = init_params(a, rng);
    auto& p = m.net.params;
    for (std::size_t i = 0; i < a.layers(); ++i) {
        detail::read_block(r, p.w[i].data(), p.w[i].size());
        detail::read_block(r, p.b[i].data(), p.b[i].size());
        detail::read_block(r, p.gamma[i].data(), p.gamma[i].size());
        detail::read_block(r, p.beta[i].data(), p.beta[i].size());
        detail::read_block(r, p.run_mean[i].data(), p.run_mean[i].size());
        detail::read_block(r, p.run_var[i].data(), p.run_var[i].size());
        p.slope[i] = r.f64();
    }
    return m;
}

inline nlohmann::json architecture_json(const Architecture& a)
{
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : a.hidden)
        layers.push_back({{"width", l.width},
                          {"activation", std::string(to_string(l.activation))},
                          {"batch_norm", l.batch_norm},
                          {"dropout_keep", l.dropout_keep}});
    return {{"inputs", a.inputs}, {"outputs", a.outputs}, {"hidden", layers}};
}

inline nlohmann::json train_config_json(const TrainConfig& c)
{
    return {{"learning_rate", c.learning_rate}, {"weight_decay", c.weight_decay}, {"batch_size", c.batch_size},
            {"max_steps", c.max_steps},         {"seed", c.seed},                 {"validation_fraction", c.validation_fraction},
            {"beta1", c.beta1},                 {"beta2", c.beta2},               {"epsilon", c.epsilon},
            {"lr_decay", c.lr_decay},           {"weight_average", c.weight_average}};
}

/// Writes `path` and a `path.json` sidecar holding `metadata` plus the
/// architecture.
inline void save_model(const Model& m, const std::string& path, nlohmann::json metadata = nlohmann::json::object())
{
    {
        std::ofstream os(path, std::ios::binary);
        if (!os)
            throw IoError("cannot open " + path + " for writing");
        save_model(m, os);
    }
    metadata["format"] = "VLEN";
    metadata["version"] = model_format_version;
    metadata["architecture"] = architecture_json(m.net.arch);
    std::ofstream js(path + ".json");
    if (!js)
        throw IoError("cannot open " + path + ".json for writing");
    js << metadata.dump(2) << '\n';
}

inline Model load_model(const std::string& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw IoError("cannot open " + path);
    return load_model(is);
}

} // namespace vle::nn
