#include "blockpred/model.hpp"

#include "blockpred/io.hpp"

#include <set>

namespace blockpred {

namespace {

constexpr const char* kModelMagic = "blockpred-model v1";

const std::set<std::string>& reserved_keys() {
    static const std::set<std::string> keys = {
        "width",     "input_dim",     "hidden_in",  "lstm_units",   "hidden_out",
        "has_optimizer", "adam_steps", "payload-bytes", "checksum"};
    return keys;
}

void put_scalar(std::string& out, float v) { put_f32(out, v); }
void put_scalar(std::string& out, double v) { put_f64(out, v); }
void read_scalar(ByteReader& r, float& v) { v = r.f32(); }
void read_scalar(ByteReader& r, double& v) { v = r.f64(); }

template <typename T>
void save_impl(const std::string& path, const ModelParams<T>& params,
               const std::vector<std::pair<std::string, std::string>>& extra,
               const std::vector<T>* adam_m, const std::vector<T>* adam_v,
               std::int64_t adam_steps, const char* width) {
    params.dims.validate();
    const ParamLayout lay(params.dims);
    if (params.flat.size() != lay.total) {
        throw ConfigError("parameter vector length does not match dims");
    }
    const bool with_opt = adam_m != nullptr && adam_v != nullptr;
    if (with_opt && (adam_m->size() != lay.total || adam_v->size() != lay.total)) {
        throw ConfigError("optimizer moment length does not match dims");
    }

    std::vector<std::pair<std::string, std::string>> header;
    header.emplace_back("width", width);
    header.emplace_back("input_dim", std::to_string(params.dims.input_dim));
    header.emplace_back("hidden_in", std::to_string(params.dims.hidden_in));
    header.emplace_back("lstm_units", std::to_string(params.dims.lstm_units));
    header.emplace_back("hidden_out", std::to_string(params.dims.hidden_out));
    header.emplace_back("has_optimizer", with_opt ? "true" : "false");
    header.emplace_back("adam_steps", std::to_string(adam_steps));
    for (const auto& kv : extra) {
        if (reserved_keys().count(kv.first)) {
            throw ConfigError("checkpoint header key '" + kv.first + "' is reserved");
        }
        header.push_back(kv);
    }

    std::string payload;
    payload.reserve(lay.total * sizeof(T) * (with_opt ? 3 : 1));
    for (T v : params.flat) put_scalar(payload, v);
    if (with_opt) {
        for (T v : *adam_m) put_scalar(payload, v);
        for (T v : *adam_v) put_scalar(payload, v);
    }
    write_artifact(path, kModelMagic, header, payload);
}

template <typename T>
LoadedCheckpoint<T> load_impl(const std::string& path, const char* width) {
    const Artifact art = read_artifact(path, kModelMagic);
    LoadedCheckpoint<T> out;
    out.header = art.header;
    try {
        const std::string got = require_key(art.header, "width");
        if (got != width) {
            throw FormatError(path + ": checkpoint width is " + got + ", expected " + width);
        }
        out.params.dims.input_dim =
            static_cast<int>(parse_int("input_dim", require_key(art.header, "input_dim")));
        out.params.dims.hidden_in =
            static_cast<int>(parse_int("hidden_in", require_key(art.header, "hidden_in")));
        out.params.dims.lstm_units =
            static_cast<int>(parse_int("lstm_units", require_key(art.header, "lstm_units")));
        out.params.dims.hidden_out =
            static_cast<int>(parse_int("hidden_out", require_key(art.header, "hidden_out")));
        out.has_optimizer = parse_bool("has_optimizer", require_key(art.header, "has_optimizer"));
        out.adam_steps = parse_int("adam_steps", require_key(art.header, "adam_steps"));
        out.params.dims.validate();
    } catch (const ConfigError& e) {
        throw FormatError(path + ": bad checkpoint header: " + e.what());
    }

    const ParamLayout lay(out.params.dims);
    ByteReader reader{art.payload};
    out.params.flat.resize(lay.total);
    for (std::size_t i = 0; i < lay.total; ++i) read_scalar(reader, out.params.flat[i]);
    if (out.has_optimizer) {
        out.adam_m.resize(lay.total);
        out.adam_v.resize(lay.total);
        for (std::size_t i = 0; i < lay.total; ++i) read_scalar(reader, out.adam_m[i]);
        for (std::size_t i = 0; i < lay.total; ++i) read_scalar(reader, out.adam_v[i]);
    }
    if (reader.pos != art.payload.size()) {
        throw FormatError(path + ": trailing bytes after parameters");
    }
    return out;
}

} // namespace

void save_checkpoint_f32(const std::string& path, const ModelParams<float>& params,
                         const std::vector<std::pair<std::string, std::string>>& extra,
                         const std::vector<float>* adam_m, const std::vector<float>* adam_v,
                         std::int64_t adam_steps) {
    save_impl(path, params, extra, adam_m, adam_v, adam_steps, "f32");
}

void save_checkpoint_f64(const std::string& path, const ModelParams<double>& params,
                         const std::vector<std::pair<std::string, std::string>>& extra,
                         const std::vector<double>* adam_m, const std::vector<double>* adam_v,
                         std::int64_t adam_steps) {
    save_impl(path, params, extra, adam_m, adam_v, adam_steps, "f64");
}

LoadedCheckpoint<float> load_checkpoint_f32(const std::string& path) {
    return load_impl<float>(path, "f32");
}

LoadedCheckpoint<double> load_checkpoint_f64(const std::string& path) {
    return load_impl<double>(path, "f64");
}

} // namespace blockpred
