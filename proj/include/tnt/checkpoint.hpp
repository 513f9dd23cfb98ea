// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "tnt/model.hpp"
#include "tnt/optimizer.hpp"

namespace tnt {

/// Checkpoint file: magic "TTCK", u32 version, then a stream of
/// length-prefixed records. All integers are little-endian u32 (u64 values
/// split low/high), all floats little-endian f64. Every record is
/// kind tag (u8), name, shape dims, rank chain, then payload counts + data.
namespace ckpt {

constexpr char kMagic[4] = {'T', 'T', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

enum RecordKind : std::uint8_t {
    kMeta = 0x01,
    kTTLinear = 0x02,
    kTTMEmbedding = 0x03,
    kDense = 0x04,
    kActivation = 0x05,
    kResidual = 0x06,
    kHead = 0x07,
    kAdamState = 0x08,
    kRngState = 0x09,
};

class Writer {
  public:
    void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
    void u64(std::uint64_t v) {
        u32(static_cast<std::uint32_t>(v & 0xffffffffULL));
        u32(static_cast<std::uint32_t>(v >> 32));
    }
    void f64(double v) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        u64(bits);
    }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        buf_.append(s);
    }
    void f64_array(const double* p, std::size_t n) {
        u32(static_cast<std::uint32_t>(n));
        for (std::size_t i = 0; i < n; ++i) f64(p[i]);
    }
    void size_array(const std::vector<std::size_t>& v) {
        u32(static_cast<std::uint32_t>(v.size()));
        for (std::size_t x : v) u32(static_cast<std::uint32_t>(x));
    }
    void raw(const std::string& bytes) { buf_.append(bytes); }

    const std::string& data() const { return buf_; }

  private:
    std::string buf_;
};

class Reader {
  public:
    Reader(const char* p, std::size_t n) : p_(p), end_(p + n) {}

    std::uint8_t u8() {
        need(1);
        return static_cast<std::uint8_t>(*p_++);
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(*p_++)) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        const std::uint64_t lo = u32();
        const std::uint64_t hi = u32();
        return lo | (hi << 32);
    }
    double f64() {
        const std::uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
    std::string str() {
        const std::uint32_t n = u32();
        need(n);
        std::string s(p_, p_ + n);
        p_ += n;
        return s;
    }
    std::vector<double> f64_array() {
        const std::uint32_t n = u32();
        std::vector<double> out(n);
        for (auto& v : out) v = f64();
        return out;
    }
    std::vector<std::size_t> size_array() {
        const std::uint32_t n = u32();
        std::vector<std::size_t> out(n);
        for (auto& v : out) v = u32();
        return out;
    }
    std::string take(std::size_t n) {
        need(n);
        std::string s(p_, p_ + n);
        p_ += n;
        return s;
    }
    bool done() const { return p_ == end_; }
    std::size_t remaining() const { return static_cast<std::size_t>(end_ - p_); }

  private:
    void need(std::size_t n) {
        if (remaining() < n) throw CheckpointError("truncated checkpoint record");
    }
    const char* p_;
    const char* end_;
};

inline void write_tensor_payload(Writer& w, const std::vector<DenseTensor>& cores,
                                 const std::vector<std::vector<double>>& diags) {
    w.u32(static_cast<std::uint32_t>(cores.size()));
    for (const auto& c : cores) {
        w.size_array(c.shape());
        w.f64_array(c.data(), c.size());
    }
    w.u32(static_cast<std::uint32_t>(diags.size()));
    for (const auto& d : diags) w.f64_array(d.data(), d.size());
}

inline void read_tensor_payload(Reader& r, std::vector<DenseTensor>& cores,
                                std::vector<std::vector<double>>& diags) {
    const std::uint32_t nc = r.u32();
    cores.clear();
    for (std::uint32_t i = 0; i < nc; ++i) {
        Shape shape = r.size_array();
        std::vector<double> data = r.f64_array();
        cores.emplace_back(std::move(shape), std::move(data));
    }
    const std::uint32_t nd = r.u32();
    diags.clear();
    for (std::uint32_t i = 0; i < nd; ++i) diags.push_back(r.f64_array());
}

// --- layer records ---------------------------------------------------------

inline void serialize_layer(Writer& out, Layer& layer);

inline void emit_record(Writer& out, const Writer& body) {
    out.u32(static_cast<std::uint32_t>(body.data().size()));
    out.raw(body.data());
}

inline void serialize_tt_linear(Writer& out, TTLinear& l) {
    Writer b;
    b.u8(kTTLinear);
    b.str(l.name());
    const auto& w = l.inner().weight();
    b.size_array(w.dims());
    b.size_array(w.rank_chain());
    b.u32(static_cast<std::uint32_t>(l.inner().input_core_count()));
    write_tensor_payload(b, w.cores, w.diag_controls);
    b.f64_array(l.inner().bias().data(), l.inner().bias().size());
    emit_record(out, b);
}

inline void serialize_dense(Writer& out, DenseLinear& l) {
    Writer b;
    b.u8(kDense);
    b.str(l.name());
    b.size_array(l.weight().shape());
    b.size_array({});
    b.f64_array(l.weight().data(), l.weight().size());
    b.f64_array(l.bias_vec().data(), l.bias_vec().size());
    emit_record(out, b);
}

inline void serialize_activation(Writer& out, Layer& l, std::uint32_t which) {
    Writer b;
    b.u8(kActivation);
    b.str(l.name());
    b.size_array({});
    b.size_array({});
    b.u32(which);  // 0 = gelu, 1 = identity
    emit_record(out, b);
}

inline void serialize_residual(Writer& out, Residual& l) {
    Writer b;
    b.u8(kResidual);
    b.str(l.name());
    b.size_array({});
    b.size_array({});
    b.f64(l.gain());
    b.u32(static_cast<std::uint32_t>(l.stack().size()));
    for (auto& child : l.stack()) serialize_layer(b, *child);
    emit_record(out, b);
}

inline void serialize_layer(Writer& out, Layer& layer) {
    if (auto* t = dynamic_cast<TTLinear*>(&layer)) return serialize_tt_linear(out, *t);
    if (auto* d = dynamic_cast<DenseLinear*>(&layer)) return serialize_dense(out, *d);
    if (dynamic_cast<Gelu*>(&layer)) return serialize_activation(out, layer, 0);
    if (dynamic_cast<Identity*>(&layer)) return serialize_activation(out, layer, 1);
    if (auto* r = dynamic_cast<Residual*>(&layer)) return serialize_residual(out, *r);
    throw CheckpointError("cannot serialize layer kind " + std::string(layer.kind()));
}

inline std::unique_ptr<Layer> deserialize_layer(Reader& r);

inline std::unique_ptr<Layer> read_layer_record(Reader& stream) {
    const std::uint32_t len = stream.u32();
    std::string body = stream.take(len);
    Reader r(body.data(), body.size());
    return deserialize_layer(r);
}

inline std::unique_ptr<Layer> deserialize_layer(Reader& r) {
    const std::uint8_t kind = r.u8();
    const std::string name = r.str();
    const Shape dims = r.size_array();
    const std::vector<std::size_t> ranks = r.size_array();
    switch (kind) {
        case kTTLinear: {
            const std::uint32_t split = r.u32();
            TTTensor w;
            read_tensor_payload(r, w.cores, w.diag_controls);
            std::vector<double> bias = r.f64_array();
            TTLinearLayer inner(std::move(w), split);
            inner.bias() = std::move(bias);
            return std::make_unique<TTLinear>(name, std::move(inner));
        }
        case kDense: {
            std::vector<double> wdata = r.f64_array();
            std::vector<double> bias = r.f64_array();
            return std::make_unique<DenseLinear>(name, DenseTensor(dims, std::move(wdata)),
                                                 std::move(bias));
        }
        case kActivation: {
            const std::uint32_t which = r.u32();
            if (which == 0) return std::make_unique<Gelu>(name);
            return std::make_unique<Identity>(name);
        }
        case kResidual: {
            const double gain = r.f64();
            const std::uint32_t count = r.u32();
            std::vector<std::unique_ptr<Layer>> stack;
            for (std::uint32_t i = 0; i < count; ++i) stack.push_back(read_layer_record(r));
            return std::make_unique<Residual>(name, std::move(stack), gain);
        }
        default:
            throw CheckpointError("unknown layer record kind " + std::to_string(kind));
    }
    (void)ranks;
}

}  // namespace ckpt

struct CheckpointMeta {
    std::string task;
    std::uint64_t seed = 0;
    std::string config_text;  // original run configuration, verbatim
};

struct LoadedCheckpoint {
    Model model;
    CheckpointMeta meta;
    bool has_adam = false;
    std::vector<double> adam_m, adam_v;
    std::uint64_t adam_t = 0;
    bool has_rng = false;
    std::uint64_t rng_state = 0;
};

inline void save_checkpoint(const std::string& path, Model& model, const CheckpointMeta& meta,
                            const Adam* adam = nullptr, const Rng* rng = nullptr) {
    ckpt::Writer out;
    out.raw(std::string(ckpt::kMagic, 4));
    out.u32(ckpt::kVersion);

    {
        ckpt::Writer b;
        b.u8(ckpt::kMeta);
        b.str("meta");
        b.size_array({});
        b.size_array({});
        b.str(meta.task);
        b.u64(meta.seed);
        b.str(meta.config_text);
        ckpt::emit_record(out, b);
    }
    if (model.embedding()) {
        ckpt::Writer b;
        b.u8(ckpt::kTTMEmbedding);
        b.str(model.embedding()->name());
        auto& t = model.embedding()->inner().table();
        Shape dims = t.row_dims();
        const Shape cols = t.col_dims();
        dims.insert(dims.end(), cols.begin(), cols.end());
        b.size_array(dims);
        b.size_array(t.rank_chain());
        b.u32(static_cast<std::uint32_t>(model.embedding()->inner().split()));
        ckpt::write_tensor_payload(b, t.cores, t.diag_controls);
        ckpt::emit_record(out, b);
    }
    for (auto& l : model.layers()) ckpt::serialize_layer(out, *l);
    {
        ckpt::Writer b;
        b.u8(ckpt::kHead);
        b.str("head");
        b.size_array({});
        b.size_array({});
        b.u32(static_cast<std::uint32_t>(model.head()));
        ckpt::emit_record(out, b);
    }
    if (adam) {
        ckpt::Writer b;
        b.u8(ckpt::kAdamState);
        b.str("adam");
        b.size_array({});
        b.size_array({});
        b.u64(adam->step_count());
        b.f64_array(adam->m().data(), adam->m().size());
        b.f64_array(adam->v().data(), adam->v().size());
        ckpt::emit_record(out, b);
    }
    if (rng) {
        ckpt::Writer b;
        b.u8(ckpt::kRngState);
        b.str("rng");
        b.size_array({});
        b.size_array({});
        b.u64(rng->state());
        ckpt::emit_record(out, b);
    }

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw CheckpointError("cannot open checkpoint for writing: " + path);
    f.write(out.data().data(), static_cast<std::streamsize>(out.data().size()));
    if (!f) throw CheckpointError("write failed: " + path);
}

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw CheckpointError("cannot open checkpoint: " + path);
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (bytes.size() < 8) throw CheckpointError("checkpoint too short");
    if (std::memcmp(bytes.data(), ckpt::kMagic, 4) != 0)
        throw CheckpointError("bad checkpoint magic");
    ckpt::Reader stream(bytes.data() + 4, bytes.size() - 4);
    const std::uint32_t version = stream.u32();
    if (version != ckpt::kVersion)
        throw CheckpointError("unsupported checkpoint version " + std::to_string(version));

    LoadedCheckpoint out;
    while (!stream.done()) {
        const std::uint32_t len = stream.u32();
        std::string body = stream.take(len);
        ckpt::Reader r(body.data(), body.size());
        const std::uint8_t kind = r.u8();
        const std::string name = r.str();
        const Shape dims = r.size_array();
        const std::vector<std::size_t> ranks = r.size_array();
        switch (kind) {
            case ckpt::kMeta: {
                out.meta.task = r.str();
                out.meta.seed = r.u64();
                out.meta.config_text = r.str();
                break;
            }
            case ckpt::kTTMEmbedding: {
                const std::uint32_t split = r.u32();
                TTMTensor t;
                ckpt::read_tensor_payload(r, t.cores, t.diag_controls);
                out.model.set_embedding(std::make_unique<EmbeddingFrontend>(
                    name, TTMEmbedding(std::move(t), split)));
                break;
            }
            case ckpt::kHead: {
                out.model.set_head(static_cast<HeadKind>(r.u32()));
                break;
            }
            case ckpt::kAdamState: {
                out.has_adam = true;
                out.adam_t = r.u64();
                out.adam_m = r.f64_array();
                out.adam_v = r.f64_array();
                break;
            }
            case ckpt::kRngState: {
                out.has_rng = true;
                out.rng_state = r.u64();
                break;
            }
            default: {
                ckpt::Reader full(body.data(), body.size());
                out.model.add_layer(ckpt::deserialize_layer(full));
                break;
            }
        }
        (void)dims;
        (void)ranks;
    }
    return out;
}

}  // namespace tnt
