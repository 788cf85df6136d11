// mgve: multi-granularity video encoder CLI.
//
// Subcommands: init, encode, encode-image, partition, gradcheck, niah,
// budget, compress. A key=value config file (--config) seeds the model
// configuration; per-subcommand flags override it. MGVE_THREADS caps
// worker threads.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "mgve/compression.hpp"
#include "mgve/gradcheck.hpp"
#include "mgve/harness.hpp"
#include "mgve/ifa.hpp"
#include "mgve/ive.hpp"
#include "mgve/media.hpp"
#include "mgve/projector.hpp"
#include "mgve/resolution.hpp"
#include "mgve/weights.hpp"

using nlohmann::json;
using namespace mgve;

namespace {

ModelConfig config_from_file(const std::string& path) {
    ModelConfig cfg;
    if (path.empty()) return cfg;
    std::ifstream is(path);
    if (!is) throw Error("cannot open config file " + path);
    std::stringstream buf;
    buf << is.rdbuf();
    cfg.apply_kv(parse_kv_text(buf.str()));
    return cfg;
}

VideoTensor load_video_arg(const std::string& arg) {
    if (is_synth_spec(arg)) return synth_video(parse_synth_spec(arg));
    return load_video(arg);
}

Tensor load_image_arg(const std::string& arg) {
    if (is_synth_spec(arg)) {
        SynthSpec spec = parse_synth_spec(arg);
        spec.frames = 1;
        return frame_at(synth_video(spec), 0);
    }
    const VideoTensor v = load_video(arg);
    return frame_at(v, 0);
}

struct RopeFlag {
    std::optional<std::string> value;  // absent: keep the weights-file mode
    void apply(ModelConfig& cfg) const {
        if (!value) return;
        if (*value == "crope") {
            cfg.rope = RopeMode::crope;
        } else if (*value == "standard") {
            cfg.rope = RopeMode::standard;
        } else {
            throw ConfigError("unknown rope mode '" + *value + "'");
        }
    }
};

int run_init(const std::string& out, const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    EncoderWeights w = init_weights(cfg, seed);
    save_weights(w, cfg, out);
    json j{{"weights", out},
           {"seed", seed},
           {"d_v", cfg.d_v},
           {"d_llm", cfg.d_llm},
           {"f", cfg.f},
           {"l_vit", cfg.l_vit},
           {"l_inter", cfg.l_inter}};
    std::cout << j.dump() << "\n";
    return 0;
}

int run_encode(const std::string& video_arg, const std::string& weights_path,
               const std::string& out, const EncodeOptions& opts, const RopeFlag& rope,
               std::optional<std::size_t> l_inter, std::optional<std::size_t> max_chunks) {
    LoadedWeights lw = load_weights(weights_path);
    rope.apply(lw.config);
    if (l_inter) lw.config.l_inter = *l_inter;
    if (max_chunks) lw.config.max_chunks = *max_chunks;
    const VideoTensor video = load_video_arg(video_arg);
    const EncodeResult result = encode_video(video, lw.weights, lw.config, opts);
    save_tokens(result.tokens, out);
    json j{{"tokens", out},
           {"chunks", result.chunks},
           {"tokens_per_chunk", result.tokens_per_chunk},
           {"token_count", result.tokens.size()},
           {"rope", to_string(lw.config.rope)},
           {"l_inter", lw.config.l_inter}};
    if (opts.compress_threshold || opts.compress_target) {
        j["compression"] = {{"threshold", result.compression_threshold},
                            {"reduction", result.compression_reduction}};
    }
    std::cout << j.dump() << "\n";
    return 0;
}

int run_encode_image(const std::string& image_arg, const std::string& weights_path,
                     const std::string& out, std::int64_t replication_id) {
    LoadedWeights lw = load_weights(weights_path);
    const Tensor image = load_image_arg(image_arg);
    const ImageEncodeResult result = encode_image(image, lw.weights, lw.config, replication_id);
    save_tokens(result.tokens, out);
    json j{{"tokens", out},
           {"grid", {{"cols", result.grid.cols}, {"rows", result.grid.rows}}},
           {"sequences", result.sequences},
           {"token_count", result.tokens.size()}};
    std::cout << j.dump() << "\n";
    return 0;
}

int run_synth(const std::string& spec_text, const std::string& out) {
    const VideoTensor v = synth_video(parse_synth_spec(spec_text));
    save_video(v, out);
    json j{{"video", out},
           {"frames", v.frame_count()},
           {"width", v.width()},
           {"height", v.height()},
           {"fps", v.fps_fixed}};
    std::cout << j.dump() << "\n";
    return 0;
}

int run_partition(std::size_t width, std::size_t height, std::size_t r_v, std::size_t patch) {
    const GridConfig grid = subimage_grid(width, height, r_v);
    const ResizePlan plan = dynamic_resize(width, height, r_v, patch);
    json j{{"width", width},
           {"height", height},
           {"grid", {{"cols", grid.cols}, {"rows", grid.rows}}},
           {"sub_images", grid.cols * grid.rows},
           {"resize", {{"target_w", plan.target_w}, {"target_h", plan.target_h}}}};
    std::cout << j.dump() << "\n";
    return 0;
}

int run_gradcheck(const std::string& size, std::uint64_t seed, std::size_t samples) {
    ModelConfig cfg = size == "small" ? ModelConfig::small() : ModelConfig::tiny();
    EncoderWeights w = init_weights(cfg, seed);
    std::mt19937_64 rng(seed + 1);
    const std::size_t side = 2 * 2 * cfg.patch;  // 2x2 pooled patch grid
    std::vector<Tensor> chunk_frames;
    for (int i = 0; i < 2; ++i) {
        chunk_frames.push_back(random_uniform({cfg.f, side, side, 3}, rng));
    }
    const std::size_t rows = side / cfg.patch, cols = side / cfg.patch;
    GradCheckReport r = grad_check(
        w,
        [&](TapeEngine& e, WeightVars& wv) {
            std::vector<Var> feats;
            std::vector<std::int64_t> ids;
            for (std::size_t i = 0; i < chunk_frames.size(); ++i) {
                Var frames = e.leaf(chunk_frames[i], false);
                feats.push_back(encode_chunk_value(e, frames, wv, cfg, rows, cols));
                ids.insert(ids.end(), (rows / 2) * (cols / 2), static_cast<std::int64_t>(i));
            }
            Var x = e.concat_rows(feats);
            x = aggregate_value(e, x, ids, wv, cfg);
            x = project_value(e, x, wv);
            return e.sum_all(x);
        },
        1e-5, samples, seed + 2);
    const bool pass = r.max_rel_err < 1e-4;
    json j{{"size", size},
           {"samples", r.samples},
           {"coordinates", r.coordinates},
           {"max_rel_err", r.max_rel_err},
           {"tolerance", 1e-4},
           {"pass", pass}};
    std::cout << j.dump() << "\n";
    return pass ? 0 : 1;
}

int run_niah(std::size_t chunks_max, std::size_t trials_per_chunk, std::uint64_t seed,
             std::size_t width, std::size_t height, std::size_t pool, ModelConfig cfg) {
    // desk-scale encoder for the sweep; config file values win if given
    EncoderWeights w = init_weights(cfg, seed);
    NiahParams params;
    params.chunks_max = chunks_max;
    params.trials_per_chunk = trials_per_chunk;
    params.seed = seed;
    params.video_pool = pool;
    params.frame_width = width;
    params.frame_height = height;
    const auto rows = niah_campaign(w, cfg, params);
    bool all_perfect = true;
    json out = json::array();
    for (const NiahRow& row : rows) {
        out.push_back({{"chunks", row.chunks},
                       {"trials", row.trials},
                       {"correct", row.correct},
                       {"accuracy", row.accuracy}});
        all_perfect = all_perfect && row.accuracy == 1.0;
    }
    std::cout << json{{"rows", out}, {"all_perfect", all_perfect}}.dump() << "\n";
    return 0;
}

int run_budget(std::size_t frames, std::size_t width, std::size_t height,
               const ModelConfig& cfg) {
    const TokenBudget b = token_budget(frames, width, height, cfg);
    json j{{"chunks", b.chunks},
           {"n_v", b.n_v},
           {"tokens_chunked", b.tokens_chunked},
           {"tokens_per_frame_baseline", b.tokens_per_frame_baseline},
           {"ratio", b.ratio}};
    std::cout << j.dump() << "\n";
    return 0;
}

int run_compress(const std::string& in, const std::string& out, std::optional<double> threshold,
                 std::optional<double> target, bool pairwise) {
    const ProjectedTokens tokens = load_tokens(in);
    TokenSequence seq;
    seq.tokens = tokens.tokens;
    seq.chunk_ids = tokens.chunk_ids;

    // per-chunk token count from the id runs; merge_tokens revalidates
    std::size_t per_chunk = seq.size();
    for (std::size_t i = 1; i < seq.chunk_ids.size(); ++i) {
        if (seq.chunk_ids[i] != seq.chunk_ids[0]) {
            per_chunk = i;
            break;
        }
    }

    double used_threshold;
    if (threshold) {
        used_threshold = *threshold;
    } else if (target) {
        const auto sweep = sweep_thresholds(seq, per_chunk, {*target});
        used_threshold = sweep[0].threshold;
        if (!sweep[0].reachable) {
            std::cerr << "note: target ratio " << *target << " unreachable; best achievable "
                      << sweep[0].achieved << "\n";
        }
    } else {
        throw ConfigError("compress: pass --threshold or --target-ratio");
    }

    const MergeResult merged = merge_tokens(seq, per_chunk, used_threshold, !pairwise);
    ProjectedTokens result;
    result.tokens = merged.sequence.tokens;
    result.chunk_ids = merged.sequence.chunk_ids;
    save_tokens(result, out);
    json j{{"tokens", out},
           {"threshold", used_threshold},
           {"reduction", merged.reduction},
           {"in_tokens", seq.size()},
           {"out_tokens", merged.sequence.size()}};
    std::cout << j.dump() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multi-granularity video encoder"};
    app.require_subcommand(1);

    std::string config_path;
    app.add_option("--config", config_path, "key=value config file");

    // init
    auto* init = app.add_subcommand("init", "create randomly initialized weights");
    std::string init_out;
    std::uint64_t init_seed = 1;
    init->add_option("--out", init_out, "weights file")->required();
    init->add_option("--seed", init_seed, "rng seed");
    std::optional<std::size_t> opt_d_v, opt_d_llm, opt_f, opt_l_vit, opt_l_inter, opt_heads,
        opt_r_v, opt_patch;
    init->add_option("--d-v", opt_d_v, "feature dim");
    init->add_option("--d-llm", opt_d_llm, "projector output dim");
    init->add_option("--f", opt_f, "frames per chunk");
    init->add_option("--l-vit", opt_l_vit, "intra-chunk depth");
    init->add_option("--l-inter", opt_l_inter, "aggregator depth");
    init->add_option("--heads", opt_heads, "attention heads");
    init->add_option("--r-v", opt_r_v, "pretraining resolution");
    init->add_option("--patch", opt_patch, "patch size");

    // encode
    auto* encode = app.add_subcommand("encode", "encode a video to visual tokens");
    std::string enc_video, enc_weights, enc_out;
    EncodeOptions enc_opts;
    RopeFlag enc_rope;
    std::optional<std::size_t> enc_l_inter, enc_max_chunks;
    std::optional<double> enc_ratio, enc_threshold;
    encode->add_option("--video", enc_video, "MGVV file or synthetic:<spec>")->required();
    encode->add_option("--weights", enc_weights, "MGVE weights file")->required();
    encode->add_option("--out", enc_out, "output MGVT file")->required();
    encode->add_option("--compress-ratio", enc_ratio, "target token reduction in [0, 0.9]");
    encode->add_option("--compress-threshold", enc_threshold, "cosine threshold in [-1, 1.01]");
    encode->add_option("--rope", enc_rope.value, "crope|standard");
    encode->add_option("--l-inter", enc_l_inter, "aggregator layers to run");
    encode->add_option("--max-chunks", enc_max_chunks, "accelerated-playback budget");

    // encode-image
    auto* encimg = app.add_subcommand("encode-image", "encode an image (thumbnail + sub-images)");
    std::string img_arg, img_weights, img_out;
    std::int64_t img_replication = 0;
    encimg->add_option("--image", img_arg, "MGVV file (frame 0) or synthetic:<spec>")->required();
    encimg->add_option("--weights", img_weights, "MGVE weights file")->required();
    encimg->add_option("--out", img_out, "output MGVT file")->required();
    encimg->add_option("--replication-id", img_replication, "chunk id assigned to each sequence");

    // partition
    auto* partition = app.add_subcommand("partition", "print the sub-image grid and resize plan");
    std::size_t part_w = 0, part_h = 0;
    std::optional<std::size_t> part_rv, part_patch;
    partition->add_option("--width", part_w, "image width")->required();
    partition->add_option("--height", part_h, "image height")->required();
    partition->add_option("--r-v", part_rv, "pretraining resolution");
    partition->add_option("--patch", part_patch, "patch size");

    // gradcheck
    auto* gradcheck_cmd = app.add_subcommand("gradcheck", "finite-difference gradient check");
    std::string gc_size = "tiny";
    std::uint64_t gc_seed = 1;
    std::size_t gc_samples = 160;
    gradcheck_cmd->add_option("--size", gc_size, "tiny|small")
        ->check(CLI::IsMember({"tiny", "small"}));
    gradcheck_cmd->add_option("--seed", gc_seed, "rng seed");
    gradcheck_cmd->add_option("--samples", gc_samples, "sampled coordinates");

    // niah
    auto* niah = app.add_subcommand("niah", "needle-in-a-haystack campaign");
    std::size_t niah_chunks = 8, niah_trials = 50, niah_w = 64, niah_h = 64, niah_pool = 10;
    std::uint64_t niah_seed = 1;
    niah->add_option("--chunks-max", niah_chunks, "sweep up to this chunk count");
    niah->add_option("--trials-per-chunk", niah_trials, "trials per chunk count");
    niah->add_option("--seed", niah_seed, "rng seed");
    niah->add_option("--width", niah_w, "frame width");
    niah->add_option("--height", niah_h, "frame height");
    niah->add_option("--pool", niah_pool, "videos in the pool");

    // budget
    auto* budget = app.add_subcommand("budget", "token-budget arithmetic");
    std::size_t bud_frames = 0, bud_w = 0, bud_h = 0;
    budget->add_option("--frames", bud_frames, "frame count")->required();
    budget->add_option("--width", bud_w, "frame width")->required();
    budget->add_option("--height", bud_h, "frame height")->required();

    // compress
    auto* compress = app.add_subcommand("compress", "merge similar tokens in an MGVT file");
    std::string cmp_in, cmp_out;
    std::optional<double> cmp_threshold, cmp_target;
    bool cmp_pairwise = false;
    compress->add_option("--in", cmp_in, "input MGVT file")->required();
    compress->add_option("--out", cmp_out, "output MGVT file")->required();
    compress->add_option("--threshold", cmp_threshold, "cosine threshold in [-1, 1.01]");
    compress->add_option("--target-ratio", cmp_target, "target reduction in [0, 0.9]");
    compress->add_flag("--pairwise", cmp_pairwise, "merge adjacent pairs only (no cascades)");

    CLI11_PARSE(app, argc, argv);

    try {
        ModelConfig cfg = config_from_file(config_path);
        if (init->parsed()) {
            if (opt_d_v) cfg.d_v = *opt_d_v;
            if (opt_d_llm) cfg.d_llm = *opt_d_llm;
            if (opt_f) cfg.f = *opt_f;
            if (opt_l_vit) cfg.l_vit = *opt_l_vit;
            if (opt_l_inter) cfg.l_inter = *opt_l_inter;
            if (opt_heads) cfg.heads = *opt_heads;
            if (opt_r_v) cfg.r_v = *opt_r_v;
            if (opt_patch) cfg.patch = *opt_patch;
            return run_init(init_out, cfg, init_seed);
        }
        if (encode->parsed()) {
            enc_opts.compress_threshold = enc_threshold;
            enc_opts.compress_target = enc_ratio;
            return run_encode(enc_video, enc_weights, enc_out, enc_opts, enc_rope, enc_l_inter,
                              enc_max_chunks);
        }
        if (encimg->parsed()) {
            return run_encode_image(img_arg, img_weights, img_out, img_replication);
        }
        if (partition->parsed()) {
            return run_partition(part_w, part_h, part_rv.value_or(cfg.r_v),
                                 part_patch.value_or(cfg.patch));
        }
        if (gradcheck_cmd->parsed()) {
            return run_gradcheck(gc_size, gc_seed, gc_samples);
        }
        if (niah->parsed()) {
            ModelConfig niah_cfg = cfg;
            if (config_path.empty()) {
                niah_cfg = ModelConfig::tiny();
                niah_cfg.f = 16;
                niah_cfg.l_inter = 3;
                niah_cfg.max_chunks = niah_chunks;
            }
            return run_niah(niah_chunks, niah_trials, niah_seed, niah_w, niah_h, niah_pool,
                            niah_cfg);
        }
        if (budget->parsed()) {
            return run_budget(bud_frames, bud_w, bud_h, cfg);
        }
        if (compress->parsed()) {
            return run_compress(cmp_in, cmp_out, cmp_threshold, cmp_target, cmp_pairwise);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
