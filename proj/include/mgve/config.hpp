#pragma once

#include <cstdint>
#include <map>
#include <sstream>
#include <string>

#include "mgve/tensor.hpp"

namespace mgve {

enum class PoolMode { average, max };
enum class RopeMode { crope, standard };

inline std::string to_string(PoolMode m) { return m == PoolMode::average ? "average" : "max"; }
inline std::string to_string(RopeMode m) { return m == RopeMode::crope ? "crope" : "standard"; }

// Desk-scale encoder hyperparameters. Structural defaults (f=16,
// l_inter=3) follow the reference configuration; the width/depth values
// are sized so the full pipeline runs in seconds on a laptop.
struct ModelConfig {
    std::size_t d_v = 64;       // visual feature dim
    std::size_t d_llm = 128;    // projector output dim
    std::size_t patch = 16;     // spatial patch size P (kernel == stride)
    std::size_t r_v = 384;      // pretraining-resolution side; ape grid is r_v/patch
    std::size_t f = 16;         // frames per chunk
    std::size_t l_vit = 4;      // intra-chunk transformer depth
    std::size_t l_inter = 3;    // aggregator depth (0 bypasses)
    std::size_t heads = 4;      // attention heads, shared by both stages
    std::size_t proj_hidden = 128;
    std::size_t mlp_ratio = 4;  // transformer FF expansion
    double rope_base = 1e4;
    double fps_fixed = 2.0;     // transcode rate; timestamps * fps / f give chunk ids
    PoolMode pool = PoolMode::average;
    RopeMode rope = RopeMode::crope;
    bool attention_only = false;  // aggregator layers reduce to softmax(SDP) * V
    std::size_t max_chunks = 60;  // accelerated-playback budget

    std::size_t ape_grid() const { return r_v / patch; }
    std::size_t head_dim() const { return d_v / heads; }

    void validate() const {
        if (patch == 0 || r_v % patch != 0) {
            throw ConfigError("config: r_v=" + std::to_string(r_v) +
                              " must be a positive multiple of patch=" + std::to_string(patch));
        }
        if (heads == 0 || d_v % heads != 0) {
            throw ConfigError("config: d_v=" + std::to_string(d_v) + " not divisible by heads=" +
                              std::to_string(heads));
        }
        if (head_dim() % 2 != 0) {
            throw ConfigError("config: head dim " + std::to_string(head_dim()) +
                              " must be even for rotary pairs");
        }
        if (f == 0) throw ConfigError("config: f must be >= 1");
        if (fps_fixed <= 0.0) throw ConfigError("config: fps_fixed must be positive");
        if (max_chunks == 0) throw ConfigError("config: max_chunks must be >= 1");
    }

    // Reduced sizes for gradient checks.
    static ModelConfig tiny() {
        ModelConfig c;
        c.d_v = 16;
        c.d_llm = 8;
        c.r_v = 64;
        c.f = 2;
        c.l_vit = 1;
        c.l_inter = 1;
        c.heads = 2;
        c.proj_hidden = 8;
        c.mlp_ratio = 2;
        return c;
    }

    static ModelConfig small() {
        ModelConfig c;
        c.d_v = 32;
        c.d_llm = 32;
        c.r_v = 128;
        c.f = 4;
        c.l_vit = 2;
        c.l_inter = 2;
        c.heads = 4;
        c.proj_hidden = 32;
        c.mlp_ratio = 2;
        return c;
    }

    std::map<std::string, std::string> to_kv() const {
        std::map<std::string, std::string> kv;
        kv["d_v"] = std::to_string(d_v);
        kv["d_llm"] = std::to_string(d_llm);
        kv["patch"] = std::to_string(patch);
        kv["r_v"] = std::to_string(r_v);
        kv["f"] = std::to_string(f);
        kv["l_vit"] = std::to_string(l_vit);
        kv["l_inter"] = std::to_string(l_inter);
        kv["heads"] = std::to_string(heads);
        kv["proj_hidden"] = std::to_string(proj_hidden);
        kv["mlp_ratio"] = std::to_string(mlp_ratio);
        std::ostringstream rb, fp;
        rb.precision(17);
        rb << rope_base;
        fp.precision(17);
        fp << fps_fixed;
        kv["rope_base"] = rb.str();
        kv["fps_fixed"] = fp.str();
        kv["pool"] = to_string(pool);
        kv["rope"] = to_string(rope);
        kv["attention_only"] = attention_only ? "1" : "0";
        kv["max_chunks"] = std::to_string(max_chunks);
        return kv;
    }

    void apply_kv(const std::map<std::string, std::string>& kv) {
        auto get = [&](const char* key, auto& field) {
            auto it = kv.find(key);
            if (it == kv.end()) return;
            std::istringstream is(it->second);
            is >> field;
            if (is.fail()) {
                throw ConfigError(std::string("config: bad value for ") + key + ": " + it->second);
            }
        };
        get("d_v", d_v);
        get("d_llm", d_llm);
        get("patch", patch);
        get("r_v", r_v);
        get("f", f);
        get("l_vit", l_vit);
        get("l_inter", l_inter);
        get("heads", heads);
        get("proj_hidden", proj_hidden);
        get("mlp_ratio", mlp_ratio);
        get("rope_base", rope_base);
        get("fps_fixed", fps_fixed);
        if (auto it = kv.find("pool"); it != kv.end()) {
            if (it->second == "average") {
                pool = PoolMode::average;
            } else if (it->second == "max") {
                pool = PoolMode::max;
            } else {
                throw ConfigError("config: unknown pool mode " + it->second);
            }
        }
        if (auto it = kv.find("rope"); it != kv.end()) {
            if (it->second == "crope") {
                rope = RopeMode::crope;
            } else if (it->second == "standard") {
                rope = RopeMode::standard;
            } else {
                throw ConfigError("config: unknown rope mode " + it->second);
            }
        }
        if (auto it = kv.find("attention_only"); it != kv.end()) {
            attention_only = it->second == "1" || it->second == "true";
        }
        get("max_chunks", max_chunks);
        validate();
    }
};

// key=value lines; '#' starts a comment. Used for config files and the
// config block inside weight files.
inline std::map<std::string, std::string> parse_kv_text(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            const char* ws = " \t\r\n";
            const std::size_t b = s.find_first_not_of(ws);
            if (b == std::string::npos) return std::string();
            const std::size_t e = s.find_last_not_of(ws);
            return s.substr(b, e - b + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (!key.empty()) kv[key] = val;
    }
    return kv;
}

inline std::string kv_to_text(const std::map<std::string, std::string>& kv) {
    std::ostringstream os;
    for (const auto& [k, v] : kv) os << k << '=' << v << '\n';
    return os.str();
}

}  // namespace mgve
