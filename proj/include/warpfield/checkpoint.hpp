#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "config.hpp"
#include "optim.hpp"
#include "render.hpp"
#include "train.hpp"

namespace warpfield {

// Binary artifact: version header, embedded config text, iteration counter,
// canonical bounds, latent split flags, then a named section table over one
// blob of little-endian doubles (parameters and optimizer moments).
struct Checkpoint {
    RunConfig config;
    SceneModel model;
    std::vector<Tensor> adam_m, adam_v; // ordered like param_refs(model)
    int adam_steps = 0;
    int iteration = 0;
    CanonicalBounds bounds; // raw extent of the bent training samples
};

namespace detail {

constexpr char kCheckpointMagic[] = "WARPFIELD1";
constexpr std::uint32_t kCheckpointVersion = 1;

struct ByteWriter {
    std::string out;
    void u8(std::uint8_t v) { out.push_back(char(v)); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
    }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void bytes(const std::string& s) { out += s; }
};

struct ByteReader {
    const std::string& buf;
    std::size_t pos = 0;
    explicit ByteReader(const std::string& b) : buf(b) {}

    void need(std::size_t n) const {
        if (pos + n > buf.size()) throw DataError("checkpoint: truncated file");
    }
    std::uint8_t u8() {
        need(1);
        return std::uint8_t(buf[pos++]);
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t(std::uint8_t(buf[pos++])) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= std::uint64_t(std::uint8_t(buf[pos++])) << (8 * i);
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string bytes(std::size_t n) {
        need(n);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
};

struct Section {
    std::string name;
    int rows = 0, cols = 0;
    std::uint64_t offset = 0; // in doubles, into the blob
};

} // namespace detail

inline void save_checkpoint(const RunConfig& config, SceneModel& model, const Adam& adam,
                            int iteration, const CanonicalBounds& bounds,
                            const std::string& path) {
    ParamRefs refs = param_refs(model);
    if (adam.parameter_count() != refs.size())
        throw UsageError("checkpoint: optimizer does not cover the parameter list");

    std::vector<detail::Section> sections;
    std::vector<const Tensor*> payload;
    std::uint64_t cursor = 0;
    auto add = [&](const std::string& name, const Tensor& t) {
        sections.push_back({name, t.rows(), t.cols(), cursor});
        payload.push_back(&t);
        cursor += t.size();
    };
    for (std::size_t p = 0; p < refs.size(); ++p) {
        add("param/" + refs[p].first, *refs[p].second);
        add("adam_m/" + refs[p].first, adam.first_moments()[p]);
        add("adam_v/" + refs[p].first, adam.second_moments()[p]);
    }

    detail::ByteWriter w;
    w.bytes(std::string(detail::kCheckpointMagic, sizeof detail::kCheckpointMagic - 1));
    w.u32(detail::kCheckpointVersion);
    std::string cfg_text = serialize_config(config);
    w.u64(cfg_text.size());
    w.bytes(cfg_text);
    w.u64(std::uint64_t(iteration));
    w.u32(std::uint32_t(model.latents.rows()));
    w.u8(bounds.valid ? 1 : 0);
    for (int c = 0; c < 3; ++c) w.f64(bounds.valid ? bounds.lo.at(0, c) : 0.0);
    for (int c = 0; c < 3; ++c) w.f64(bounds.valid ? bounds.hi.at(0, c) : 0.0);
    w.u64(model.latent_is_test.size());
    for (std::uint8_t f : model.latent_is_test) w.u8(f);
    w.u64(std::uint64_t(adam.step_count()));
    w.u32(std::uint32_t(sections.size()));
    for (const auto& s : sections) {
        w.u64(s.name.size());
        w.bytes(s.name);
        w.u32(std::uint32_t(s.rows));
        w.u32(std::uint32_t(s.cols));
        w.u64(s.offset);
    }
    w.u64(cursor);
    for (const Tensor* t : payload)
        for (std::size_t i = 0; i < t->size(); ++i) w.f64((*t)[i]);

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("checkpoint: cannot open " + path + " for writing");
    out.write(w.out.data(), std::streamsize(w.out.size()));
    if (!out) throw DataError("checkpoint: short write to " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("checkpoint: cannot open " + path);
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    detail::ByteReader r(buf);

    const std::size_t magic_len = sizeof detail::kCheckpointMagic - 1;
    if (r.bytes(magic_len) != std::string(detail::kCheckpointMagic, magic_len))
        throw DataError("checkpoint: bad magic, not a checkpoint file");
    std::uint32_t version = r.u32();
    if (version != detail::kCheckpointVersion)
        throw DataError("checkpoint: unsupported version " + std::to_string(version));

    Checkpoint cp;
    std::string cfg_text = r.bytes(std::size_t(r.u64()));
    try {
        parse_config_text(cp.config, cfg_text);
    } catch (const UsageError& e) {
        throw DataError(std::string("checkpoint: embedded config invalid: ") + e.what());
    }
    cp.iteration = int(r.u64());
    int latent_count = int(r.u32());
    std::uint8_t bounds_valid = r.u8();
    Tensor lo(1, 3), hi(1, 3);
    for (int c = 0; c < 3; ++c) lo.at(0, c) = r.f64();
    for (int c = 0; c < 3; ++c) hi.at(0, c) = r.f64();
    if (bounds_valid) {
        cp.bounds.lo = lo;
        cp.bounds.hi = hi;
        cp.bounds.valid = true;
    }
    std::size_t flag_count = std::size_t(r.u64());
    std::vector<std::uint8_t> flags(flag_count);
    for (std::size_t i = 0; i < flag_count; ++i) flags[i] = r.u8();
    cp.adam_steps = int(r.u64());

    std::uint32_t section_count = r.u32();
    std::vector<detail::Section> sections(section_count);
    for (auto& s : sections) {
        s.name = r.bytes(std::size_t(r.u64()));
        s.rows = int(r.u32());
        s.cols = int(r.u32());
        s.offset = r.u64();
    }
    std::uint64_t blob_len = r.u64();
    std::size_t blob_pos = r.pos;
    r.need(std::size_t(blob_len) * 8);

    ModelConfig mc = cp.config.model_config();
    mc.latent_count = latent_count;
    cp.model = init_model(mc, cp.config.seed);
    if (flags.size() != std::size_t(latent_count))
        throw DataError("checkpoint: latent flag count does not match the latent table");
    cp.model.latent_is_test = flags;

    auto read_section = [&](const std::string& name, Tensor& dst) {
        for (const auto& s : sections)
            if (s.name == name) {
                if (s.rows != dst.rows() || s.cols != dst.cols())
                    throw DataError("checkpoint: shape mismatch for section " + name);
                std::uint64_t count = std::uint64_t(s.rows) * std::uint64_t(s.cols);
                if (s.offset + count > blob_len)
                    throw DataError("checkpoint: section " + name + " overruns the blob");
                detail::ByteReader br(buf);
                br.pos = blob_pos + std::size_t(s.offset) * 8;
                for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = br.f64();
                return;
            }
        throw DataError("checkpoint: missing section " + name);
    };

    ParamRefs refs = param_refs(cp.model);
    cp.adam_m.clear();
    cp.adam_v.clear();
    for (auto& [name, t] : refs) {
        read_section("param/" + name, *t);
        Tensor m(t->rows(), t->cols()), v(t->rows(), t->cols());
        read_section("adam_m/" + name, m);
        read_section("adam_v/" + name, v);
        cp.adam_m.push_back(std::move(m));
        cp.adam_v.push_back(std::move(v));
    }
    return cp;
}

// Resume a trainer from a loaded checkpoint: parameters, optimizer moments,
// iteration counter, and canonical bounds all carry over, so a split run
// matches an uninterrupted one bitwise.
inline void restore_trainer(Trainer& trainer, Checkpoint& cp) {
    ParamRefs dst = param_refs(trainer.model);
    ParamRefs src = param_refs(cp.model);
    if (dst.size() != src.size())
        throw DataError("resume: parameter list does not match the checkpoint");
    for (std::size_t p = 0; p < dst.size(); ++p) {
        if (dst[p].first != src[p].first || !dst[p].second->same_shape(*src[p].second))
            throw DataError("resume: parameter " + dst[p].first +
                            " does not match the checkpoint (incompatible config or dataset)");
        *dst[p].second = *src[p].second;
    }
    if (trainer.model.latent_is_test != cp.model.latent_is_test)
        throw DataError("resume: train/test split does not match the checkpoint");
    trainer.adam.restore(cp.adam_m, cp.adam_v, cp.adam_steps);
    trainer.iteration = cp.iteration;
    trainer.bounds = cp.bounds;
}

} // namespace warpfield
