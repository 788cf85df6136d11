#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "mgve/tensor.hpp"

namespace mgve {

// A decoded video: frames at a fixed transcode rate plus the per-frame
// timestamps on the ORIGINAL timeline. Timestamps survive frame dropping,
// which is what makes downstream chunk ids non-contiguous.
struct VideoTensor {
    Tensor frames;                   // [T x H x W x 3], values in [0,1]
    std::vector<double> timestamps;  // seconds, strictly increasing, size T
    double fps_fixed = 2.0;

    std::size_t frame_count() const { return frames.shape.empty() ? 0 : frames.shape[0]; }
    std::size_t height() const { return frames.shape[1]; }
    std::size_t width() const { return frames.shape[2]; }

    void validate() const {
        if (frames.rank() != 4 || frames.shape[3] != 3) {
            throw ShapeError("video: frames must be [T x H x W x 3], got " + frames.shape_str());
        }
        if (timestamps.size() != frame_count()) {
            throw ShapeError("video: " + std::to_string(timestamps.size()) + " timestamps for " +
                             std::to_string(frame_count()) + " frames");
        }
        for (std::size_t i = 1; i < timestamps.size(); ++i) {
            if (!(timestamps[i] > timestamps[i - 1])) {
                throw ValueError("video: timestamps not strictly increasing at index " +
                                 std::to_string(i));
            }
        }
    }
};

// F consecutive frames plus the timestamp-derived position id.
struct Chunk {
    Tensor frames;  // [F x H x W x 3]
    std::int64_t chunk_id = 0;
    double first_timestamp = 0.0;
};

inline std::int64_t chunk_id_from_timestamp(double first_timestamp, double fps_fixed,
                                            std::size_t f) {
    return static_cast<std::int64_t>(
        std::floor(first_timestamp * fps_fixed / static_cast<double>(f)));
}

inline std::size_t chunk_count(const VideoTensor& v, std::size_t f) {
    return (v.frame_count() + f - 1) / f;
}

// Extracts one chunk of exactly F frames; a trailing partial chunk
// repeats its final frame to fill.
inline Chunk chunk_at(const VideoTensor& v, std::size_t index, std::size_t f) {
    if (v.frame_count() == 0) throw ValueError("chunk_at: empty video");
    if (f == 0) throw ConfigError("chunk_at: f must be >= 1");
    const std::size_t t_v = v.frame_count();
    if (index >= chunk_count(v, f)) {
        throw ValueError("chunk_at: chunk " + std::to_string(index) + " out of range");
    }
    const std::size_t h = v.height(), w = v.width();
    const std::size_t frame_elems = h * w * 3;
    Chunk chunk;
    chunk.frames = Tensor({f, h, w, 3});
    for (std::size_t i = 0; i < f; ++i) {
        const std::size_t src = std::min(index * f + i, t_v - 1);
        std::copy(v.frames.data.begin() + src * frame_elems,
                  v.frames.data.begin() + (src + 1) * frame_elems,
                  chunk.frames.data.begin() + i * frame_elems);
    }
    chunk.first_timestamp = v.timestamps[index * f];
    chunk.chunk_id = chunk_id_from_timestamp(chunk.first_timestamp, v.fps_fixed, f);
    return chunk;
}

// Splits into ceil(T/F) chunks. Chunk ids come from first-frame
// timestamps, so subsampled videos keep their original-timeline positions.
inline std::vector<Chunk> partition_chunks(const VideoTensor& v, std::size_t f) {
    if (v.frame_count() == 0) throw ValueError("partition_chunks: empty video");
    v.validate();
    if (f == 0) throw ConfigError("partition_chunks: f must be >= 1");
    const std::size_t n_chunks = chunk_count(v, f);
    std::vector<Chunk> chunks;
    chunks.reserve(n_chunks);
    for (std::size_t c = 0; c < n_chunks; ++c) chunks.push_back(chunk_at(v, c, f));
    return chunks;
}

// Uniform-stride frame dropping down to at most max_chunks*F frames.
// Retained frames keep their original timestamps.
inline VideoTensor accelerate_playback(const VideoTensor& v, std::size_t max_chunks,
                                       std::size_t f) {
    v.validate();
    if (max_chunks == 0) throw ConfigError("accelerate_playback: max_chunks must be >= 1");
    const std::size_t t_v = v.frame_count();
    const std::size_t budget = max_chunks * f;
    if (t_v <= budget) return v;
    const std::size_t stride = (t_v + budget - 1) / budget;
    const std::size_t h = v.height(), w = v.width();
    const std::size_t frame_elems = h * w * 3;
    VideoTensor out;
    out.fps_fixed = v.fps_fixed;
    const std::size_t kept = (t_v + stride - 1) / stride;
    out.frames = Tensor({kept, h, w, 3});
    out.timestamps.reserve(kept);
    std::size_t dst = 0;
    for (std::size_t src = 0; src < t_v; src += stride, ++dst) {
        std::copy(v.frames.data.begin() + src * frame_elems,
                  v.frames.data.begin() + (src + 1) * frame_elems,
                  out.frames.data.begin() + dst * frame_elems);
        out.timestamps.push_back(v.timestamps[src]);
    }
    return out;
}

// ------------------------------------------------------- synthetic assets

enum class SynthPattern { constant, moving_square, unique_noise };

struct SynthSpec {
    SynthPattern pattern = SynthPattern::unique_noise;
    std::size_t frames = 16;
    std::size_t width = 64;
    std::size_t height = 64;
    double fps = 2.0;
    std::uint64_t seed = 1;
    double value = 0.5;   // fill level for the constant pattern
    double speed = 1.0;   // pixels per frame for the moving square
};

// Deterministic test-asset generator. The unique pattern stamps a
// frame-index intensity into pixel (0,0), so no two frames are ever equal.
inline VideoTensor synth_video(const SynthSpec& s) {
    if (s.frames == 0 || s.width == 0 || s.height == 0) {
        throw ShapeError("synth_video: zero extent");
    }
    VideoTensor v;
    v.fps_fixed = s.fps;
    v.frames = Tensor({s.frames, s.height, s.width, 3});
    v.timestamps.resize(s.frames);
    for (std::size_t t = 0; t < s.frames; ++t) {
        v.timestamps[t] = static_cast<double>(t) / s.fps;
    }
    const std::size_t frame_elems = s.height * s.width * 3;
    switch (s.pattern) {
        case SynthPattern::constant: {
            std::fill(v.frames.data.begin(), v.frames.data.end(), s.value);
            break;
        }
        case SynthPattern::moving_square: {
            const std::size_t side = std::max<std::size_t>(1, std::min(s.width, s.height) / 4);
            for (std::size_t t = 0; t < s.frames; ++t) {
                double* fr = &v.frames.data[t * frame_elems];
                for (std::size_t i = 0; i < frame_elems; ++i) fr[i] = 0.1;
                const std::size_t x0 = static_cast<std::size_t>(std::fmod(
                    s.speed * static_cast<double>(t), static_cast<double>(s.width - side + 1)));
                const std::size_t y0 = static_cast<std::size_t>(std::fmod(
                    0.5 * s.speed * static_cast<double>(t),
                    static_cast<double>(s.height - side + 1)));
                for (std::size_t y = y0; y < y0 + side; ++y) {
                    for (std::size_t x = x0; x < x0 + side; ++x) {
                        double* px = &fr[(y * s.width + x) * 3];
                        px[0] = 0.9;
                        px[1] = 0.6;
                        px[2] = 0.2;
                    }
                }
            }
            break;
        }
        case SynthPattern::unique_noise: {
            std::mt19937_64 rng(s.seed);
            std::uniform_real_distribution<double> dist(0.0, 1.0);
            for (double& px : v.frames.data) px = dist(rng);
            for (std::size_t t = 0; t < s.frames; ++t) {
                v.frames.data[t * frame_elems] =
                    (static_cast<double>(t) + 0.5) / static_cast<double>(s.frames);
            }
            break;
        }
    }
    return v;
}

// "synthetic:<pattern>[,key=value...]" with keys frames,width,height,fps,
// seed,value,speed. Example: synthetic:unique,frames=64,width=64,height=64
inline bool is_synth_spec(const std::string& s) { return s.rfind("synthetic:", 0) == 0; }

inline SynthSpec parse_synth_spec(const std::string& text) {
    if (!is_synth_spec(text)) throw FormatError("synth spec must start with 'synthetic:'");
    SynthSpec spec;
    std::string body = text.substr(10);
    std::vector<std::string> parts;
    std::size_t pos = 0;
    while (pos <= body.size()) {
        const std::size_t comma = body.find(',', pos);
        parts.push_back(body.substr(pos, comma == std::string::npos ? comma : comma - pos));
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    if (parts.empty() || parts[0].empty()) throw FormatError("synth spec: missing pattern");
    const std::string& name = parts[0];
    if (name == "constant") {
        spec.pattern = SynthPattern::constant;
    } else if (name == "moving-square") {
        spec.pattern = SynthPattern::moving_square;
    } else if (name == "unique" || name == "unique-noise") {
        spec.pattern = SynthPattern::unique_noise;
    } else {
        throw FormatError("synth spec: unknown pattern '" + name + "'");
    }
    for (std::size_t i = 1; i < parts.size(); ++i) {
        const std::size_t eq = parts[i].find('=');
        if (eq == std::string::npos) throw FormatError("synth spec: expected key=value, got '" + parts[i] + "'");
        const std::string key = parts[i].substr(0, eq);
        const std::string val = parts[i].substr(eq + 1);
        try {
            if (key == "frames") {
                spec.frames = std::stoul(val);
            } else if (key == "width") {
                spec.width = std::stoul(val);
            } else if (key == "height") {
                spec.height = std::stoul(val);
            } else if (key == "fps") {
                spec.fps = std::stod(val);
            } else if (key == "seed") {
                spec.seed = std::stoull(val);
            } else if (key == "value") {
                spec.value = std::stod(val);
            } else if (key == "speed") {
                spec.speed = std::stod(val);
            } else {
                throw FormatError("synth spec: unknown key '" + key + "'");
            }
        } catch (const std::invalid_argument&) {
            throw FormatError("synth spec: bad value for '" + key + "': " + val);
        }
    }
    return spec;
}

// ------------------------------------------------------------ raw file io

namespace detail {

inline void write_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline void write_u16(std::ostream& os, std::uint16_t v) {
    unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 2);
}

inline void write_f32(std::ostream& os, float v) {
    std::uint32_t u;
    std::memcpy(&u, &v, 4);
    write_u32(os, u);
}

inline std::uint32_t read_u32(std::istream& is, const char* what) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw TruncationError(std::string("truncated while reading ") + what);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline std::uint16_t read_u16(std::istream& is, const char* what) {
    unsigned char b[2];
    is.read(reinterpret_cast<char*>(b), 2);
    if (!is) throw TruncationError(std::string("truncated while reading ") + what);
    return static_cast<std::uint16_t>(static_cast<std::uint16_t>(b[0]) |
                                      (static_cast<std::uint16_t>(b[1]) << 8));
}

inline float read_f32(std::istream& is, const char* what) {
    const std::uint32_t u = read_u32(is, what);
    float v;
    std::memcpy(&v, &u, 4);
    return v;
}

inline void write_f32_block(std::ostream& os, const std::vector<double>& data) {
    std::vector<float> buf(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) buf[i] = static_cast<float>(data[i]);
    os.write(reinterpret_cast<const char*>(buf.data()),
             static_cast<std::streamsize>(buf.size() * sizeof(float)));
}

inline void read_f32_block(std::istream& is, std::vector<double>& data, const char* what) {
    std::vector<float> buf(data.size());
    is.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!is) throw TruncationError(std::string("truncated while reading ") + what);
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = static_cast<double>(buf[i]);
}

}  // namespace detail

// MGVV raw video: magic "MGVV", u32 T,H,W (LE), f32 fps, then f32 RGB
// frames row-major. Timestamps are reconstructed as index/fps.
inline void save_video(const VideoTensor& v, const std::string& path) {
    v.validate();
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("save_video: cannot open " + path);
    os.write("MGVV", 4);
    detail::write_u32(os, static_cast<std::uint32_t>(v.frame_count()));
    detail::write_u32(os, static_cast<std::uint32_t>(v.height()));
    detail::write_u32(os, static_cast<std::uint32_t>(v.width()));
    detail::write_f32(os, static_cast<float>(v.fps_fixed));
    detail::write_f32_block(os, v.frames.data);
    if (!os) throw Error("save_video: write failed for " + path);
}

inline VideoTensor load_video(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("load_video: cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is) throw TruncationError("load_video: truncated header in " + path);
    if (std::memcmp(magic, "MGVV", 4) != 0) {
        throw FormatError("load_video: bad magic in " + path);
    }
    const std::uint32_t t = detail::read_u32(is, "frame count");
    const std::uint32_t h = detail::read_u32(is, "height");
    const std::uint32_t w = detail::read_u32(is, "width");
    const float fps = detail::read_f32(is, "fps");
    if (t == 0 || h == 0 || w == 0 || !(fps > 0.0f)) {
        throw FormatError("load_video: degenerate header in " + path);
    }
    VideoTensor v;
    v.fps_fixed = static_cast<double>(fps);
    v.frames = Tensor({t, h, w, 3});
    detail::read_f32_block(is, v.frames.data, "frame data");
    v.timestamps.resize(t);
    for (std::uint32_t i = 0; i < t; ++i) {
        v.timestamps[i] = static_cast<double>(i) / v.fps_fixed;
    }
    return v;
}

// ---------------------------------------------------------- image resizing

// Bilinear resample of an [H x W x 3] image, edge-clamped; used for the
// dynamic-resolution preprocessing and for fitting needle images.
inline Tensor resize_image(const Tensor& img, std::size_t out_h, std::size_t out_w) {
    if (img.rank() != 3 || img.shape[2] != 3) {
        throw ShapeError("resize_image: expected [H x W x 3], got " + img.shape_str());
    }
    const std::size_t sh = img.shape[0], sw = img.shape[1];
    if (out_h == sh && out_w == sw) return img;
    Tensor out({out_h, out_w, 3});
    auto axis = [](std::size_t idx, std::size_t out_n, std::size_t src_n, std::size_t& i0,
                   std::size_t& i1, double& w) {
        const double u = (static_cast<double>(idx) + 0.5) * static_cast<double>(src_n) /
                             static_cast<double>(out_n) -
                         0.5;
        const double cl = std::max(0.0, std::min(u, static_cast<double>(src_n - 1)));
        double fl = std::floor(cl);
        i0 = static_cast<std::size_t>(fl);
        i1 = std::min(i0 + 1, src_n - 1);
        w = cl - fl;
    };
    for (std::size_t y = 0; y < out_h; ++y) {
        std::size_t y0, y1;
        double wy;
        axis(y, out_h, sh, y0, y1, wy);
        for (std::size_t x = 0; x < out_w; ++x) {
            std::size_t x0, x1;
            double wx;
            axis(x, out_w, sw, x0, x1, wx);
            for (std::size_t c = 0; c < 3; ++c) {
                const double a = img.data[(y0 * sw + x0) * 3 + c] * (1.0 - wx) +
                                 img.data[(y0 * sw + x1) * 3 + c] * wx;
                const double b = img.data[(y1 * sw + x0) * 3 + c] * (1.0 - wx) +
                                 img.data[(y1 * sw + x1) * 3 + c] * wx;
                out.data[(y * out_w + x) * 3 + c] = a * (1.0 - wy) + b * wy;
            }
        }
    }
    return out;
}

// Resizes every frame; timestamps and fps are untouched.
inline VideoTensor resize_video(const VideoTensor& v, std::size_t out_h, std::size_t out_w) {
    if (v.height() == out_h && v.width() == out_w) return v;
    VideoTensor out;
    out.fps_fixed = v.fps_fixed;
    out.timestamps = v.timestamps;
    const std::size_t t = v.frame_count();
    out.frames = Tensor({t, out_h, out_w, 3});
    const std::size_t in_elems = v.height() * v.width() * 3;
    const std::size_t out_elems = out_h * out_w * 3;
    for (std::size_t i = 0; i < t; ++i) {
        Tensor frame({v.height(), v.width(), 3});
        std::copy(v.frames.data.begin() + i * in_elems, v.frames.data.begin() + (i + 1) * in_elems,
                  frame.data.begin());
        Tensor resized = resize_image(frame, out_h, out_w);
        std::copy(resized.data.begin(), resized.data.end(),
                  out.frames.data.begin() + i * out_elems);
    }
    return out;
}

inline Tensor frame_at(const VideoTensor& v, std::size_t index) {
    const std::size_t elems = v.height() * v.width() * 3;
    Tensor frame({v.height(), v.width(), 3});
    std::copy(v.frames.data.begin() + index * elems, v.frames.data.begin() + (index + 1) * elems,
              frame.data.begin());
    return frame;
}

}  // namespace mgve
