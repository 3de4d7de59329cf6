#include "veegan/snapshot.hpp"

#include <cstring>
#include <string>

namespace veegan::nn {

namespace {

constexpr char kMagic[8] = {'V', 'G', 'S', 'N', 'A', 'P', 0, 0};
constexpr char kNetMagic[8] = {'V', 'G', 'N', 'E', 'T', 0, 0, 0};
constexpr std::uint32_t kVersion = 1;

std::uint64_t fnv1a(std::span<const std::uint8_t> bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::uint8_t b : bytes) {
        h ^= b;
        h *= 0x100000001b3ULL;
    }
    return h;
}

class Writer {
public:
    template <class T>
    void put(T v) {
        const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
        out_.insert(out_.end(), p, p + sizeof(T));
    }
    void bytes(const char* p, std::size_t n) { out_.insert(out_.end(), p, p + n); }
    void tensor(const nd::Tensor& t) {
        put<std::uint32_t>(static_cast<std::uint32_t>(t.rank()));
        for (std::size_t e : t.shape()) put<std::uint64_t>(e);
        for (double v : t.data()) put<double>(v);
    }
    Blob finish() {
        put<std::uint64_t>(fnv1a(out_));
        return std::move(out_);
    }

private:
    Blob out_;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

    template <class T>
    T get() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, in_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    void expect(const char* magic, std::size_t n) {
        need(n);
        if (std::memcmp(in_.data() + pos_, magic, n) != 0) throw CorruptBlob("snapshot: bad magic");
        pos_ += n;
    }
    nd::Tensor tensor() {
        const auto rank = get<std::uint32_t>();
        if (rank > 8) throw CorruptBlob("snapshot: implausible tensor rank " + std::to_string(rank));
        nd::Shape shape(rank);
        std::size_t n = 1;
        for (auto& e : shape) {
            e = get<std::uint64_t>();
            if (e != 0 && n > remaining() / e) throw CorruptBlob("snapshot: tensor extent exceeds blob size");
            n *= e;
        }
        need(n * sizeof(double));
        std::vector<double> data(n);
        std::memcpy(data.data(), in_.data() + pos_, n * sizeof(double));
        pos_ += n * sizeof(double);
        return nd::Tensor(std::move(shape), std::move(data));
    }
    std::size_t remaining() const { return in_.size() - pos_; }
    std::size_t pos() const { return pos_; }

private:
    void need(std::size_t n) const {
        if (remaining() < n) throw CorruptBlob("snapshot: truncated blob");
    }
    std::span<const std::uint8_t> in_;
    std::size_t pos_ = 0;
};

void write_net(Writer& w, const NetParams& p) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(p.layers.size()));
    w.put<std::uint8_t>(static_cast<std::uint8_t>(p.hidden));
    w.put<std::uint8_t>(static_cast<std::uint8_t>(p.output));
    w.put<double>(p.leaky_slope);
    for (const auto& l : p.layers) {
        w.tensor(l.weight);
        w.tensor(l.bias);
    }
}

Activation read_activation(Reader& r) {
    const auto a = r.get<std::uint8_t>();
    if (a > static_cast<std::uint8_t>(Activation::Sigmoid)) throw CorruptBlob("snapshot: bad activation code");
    return static_cast<Activation>(a);
}

NetParams read_net(Reader& r) {
    NetParams p;
    const auto n = r.get<std::uint32_t>();
    p.hidden = read_activation(r);
    p.output = read_activation(r);
    p.leaky_slope = r.get<double>();
    for (std::uint32_t i = 0; i < n; ++i) {
        Layer l;
        l.weight = r.tensor();
        l.bias = r.tensor();
        p.layers.push_back(std::move(l));
    }
    try {
        p.validate();
    } catch (const std::invalid_argument& e) {
        throw CorruptBlob(std::string("snapshot: ") + e.what());
    }
    return p;
}

void verify_checksum(std::span<const std::uint8_t> blob) {
    if (blob.size() < 8) throw CorruptBlob("snapshot: truncated blob");
    std::uint64_t stored;
    std::memcpy(&stored, blob.data() + blob.size() - 8, 8);
    if (stored != fnv1a(blob.first(blob.size() - 8))) throw CorruptBlob("snapshot: checksum mismatch");
}

}  // namespace

Blob snapshot(const NetParams& params, const OptState& state) {
    Writer w;
    w.bytes(kMagic, sizeof kMagic);
    w.put<std::uint32_t>(kVersion);
    write_net(w, params);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(state.config.kind));
    w.put<double>(state.config.lr);
    w.put<double>(state.config.beta1);
    w.put<double>(state.config.beta2);
    w.put<double>(state.config.eps);
    w.put<std::uint64_t>(state.step);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(state.m.size()));
    for (const auto& t : state.m) w.tensor(t);
    for (const auto& t : state.v) w.tensor(t);
    return w.finish();
}

std::pair<NetParams, OptState> restore(std::span<const std::uint8_t> blob) {
    verify_checksum(blob);
    Reader r(blob.first(blob.size() - 8));
    r.expect(kMagic, sizeof kMagic);
    if (r.get<std::uint32_t>() != kVersion) throw CorruptBlob("snapshot: unsupported version");
    NetParams p = read_net(r);
    OptState s;
    const auto kind = r.get<std::uint8_t>();
    if (kind > 1) throw CorruptBlob("snapshot: bad optimizer kind");
    s.config.kind = static_cast<OptimizerKind>(kind);
    s.config.lr = r.get<double>();
    s.config.beta1 = r.get<double>();
    s.config.beta2 = r.get<double>();
    s.config.eps = r.get<double>();
    s.step = r.get<std::uint64_t>();
    const auto nm = r.get<std::uint32_t>();
    for (std::uint32_t i = 0; i < nm; ++i) s.m.push_back(r.tensor());
    for (std::uint32_t i = 0; i < nm; ++i) s.v.push_back(r.tensor());
    if (r.remaining() != 0) throw CorruptBlob("snapshot: trailing bytes");
    return {std::move(p), std::move(s)};
}

Blob encode_net(const NetParams& params) {
    Writer w;
    w.bytes(kNetMagic, sizeof kNetMagic);
    w.put<std::uint32_t>(kVersion);
    write_net(w, params);
    return w.finish();
}

NetParams decode_net(std::span<const std::uint8_t> blob) {
    verify_checksum(blob);
    Reader r(blob.first(blob.size() - 8));
    r.expect(kNetMagic, sizeof kNetMagic);
    if (r.get<std::uint32_t>() != kVersion) throw CorruptBlob("snapshot: unsupported version");
    NetParams p = read_net(r);
    if (r.remaining() != 0) throw CorruptBlob("snapshot: trailing bytes");
    return p;
}

}  // namespace veegan::nn
