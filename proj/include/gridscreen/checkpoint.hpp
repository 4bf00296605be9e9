#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "gridscreen/dataset.hpp"
#include "gridscreen/diffusion.hpp"
#include "gridscreen/unet.hpp"
#include "json.hpp"

namespace gridscreen {

// Self-contained sampling artifact: network parameters plus the schedule and
// normalizer they were trained with.
struct Checkpoint {
    DenoiserParams params;
    int T = 0;
    double beta_start = 0.0, beta_end = 0.0;
    Normalizer normalizer;
    std::string case_name;
    int n = 0;

    NoiseSchedule schedule() const { return make_schedule(T, beta_start, beta_end); }
};

// Layout: u64 LE header length, JSON header, then raw little-endian f32
// tensor data at the offsets recorded in the header.
inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
    nlohmann::json header;
    header["format"] = "gridscreen-checkpoint";
    header["version"] = 1;
    header["unet"] = {{"in_channels", ck.params.config.in_channels},
                      {"base_width", ck.params.config.base_width},
                      {"depth", ck.params.config.depth},
                      {"time_embed_dim", ck.params.config.time_embed_dim},
                      {"pad_to", ck.params.config.pad_to}};
    header["schedule"] = {{"T", ck.T}, {"beta_start", ck.beta_start}, {"beta_end", ck.beta_end}};
    header["normalizer"] = normalizer_to_json(ck.normalizer);
    header["case_name"] = ck.case_name;
    header["n"] = ck.n;

    std::uint64_t offset = 0;
    nlohmann::json tensors = nlohmann::json::array();
    for (const NamedTensor& t : ck.params.tensors.items) {
        tensors.push_back({{"name", t.name}, {"shape", t.shape}, {"offset", offset}, {"dtype", "f32"}});
        offset += t.numel() * sizeof(float);
    }
    header["tensors"] = tensors;

    const std::string hs = header.dump();
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw GridscreenError("cannot write checkpoint " + path);
    const std::uint64_t hlen = hs.size();
    f.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    f.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (const NamedTensor& t : ck.params.tensors.items) {
        std::vector<float> raw(t.data.size());
        for (std::size_t i = 0; i < t.data.size(); ++i) raw[i] = static_cast<float>(t.data[i]);
        f.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size() * sizeof(float)));
    }
    if (!f) throw GridscreenError("write failed for checkpoint " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw GridscreenError("cannot read checkpoint " + path);
    std::uint64_t hlen = 0;
    f.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
    std::string hs(hlen, '\0');
    f.read(hs.data(), static_cast<std::streamsize>(hlen));
    if (!f) throw GridscreenError("truncated checkpoint header in " + path);
    const nlohmann::json header = nlohmann::json::parse(hs);
    if (header.value("format", "") != "gridscreen-checkpoint")
        throw GridscreenError("not a gridscreen checkpoint: " + path);

    Checkpoint ck;
    ck.params.config.in_channels = header.at("unet").at("in_channels").get<int>();
    ck.params.config.base_width = header.at("unet").at("base_width").get<int>();
    ck.params.config.depth = header.at("unet").at("depth").get<int>();
    ck.params.config.time_embed_dim = header.at("unet").at("time_embed_dim").get<int>();
    ck.params.config.pad_to = header.at("unet").at("pad_to").get<int>();
    ck.T = header.at("schedule").at("T").get<int>();
    ck.beta_start = header.at("schedule").at("beta_start").get<double>();
    ck.beta_end = header.at("schedule").at("beta_end").get<double>();
    ck.normalizer = normalizer_from_json(header.at("normalizer"));
    ck.case_name = header.value("case_name", "");
    ck.n = header.value("n", 0);

    ck.params.tensors = zero_params_like(ck.params.config);
    const std::streampos data_start = f.tellg();
    for (const auto& jt : header.at("tensors")) {
        const std::string name = jt.at("name").get<std::string>();
        NamedTensor& t = ck.params.tensors.at(name);
        const std::vector<int> shape = jt.at("shape").get<std::vector<int>>();
        if (shape != t.shape) throw GridscreenError("checkpoint shape mismatch for " + name);
        const std::uint64_t offset = jt.at("offset").get<std::uint64_t>();
        f.seekg(data_start + static_cast<std::streamoff>(offset));
        std::vector<float> raw(t.numel());
        f.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size() * sizeof(float)));
        if (!f) throw GridscreenError("truncated checkpoint data in " + path);
        for (std::size_t i = 0; i < raw.size(); ++i) t.data[i] = static_cast<double>(raw[i]);
    }
    return ck;
}

}  // namespace gridscreen
