#include "rlalign/checkpoint.hpp"

#include <algorithm>
#include <cstring>

#include "rlalign/image_io.hpp"

namespace rlalign::nn {

namespace {

class Writer {
public:
    void u8(std::uint8_t v) { bytes_.push_back(v); }
    void u32(std::uint32_t v)
    {
        for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFFu));
    }
    void u64(std::uint64_t v)
    {
        for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFFu));
    }
    void f32(float v)
    {
        std::uint32_t bits;
        std::memcpy(&bits, &v, sizeof bits);
        u32(bits);
    }
    void floats(const std::vector<float>& v)
    {
        const std::size_t at = bytes_.size();
        bytes_.resize(at + v.size() * sizeof(float));
        std::memcpy(bytes_.data() + at, v.data(), v.size() * sizeof(float));
    }
    void raw(const void* p, std::size_t n)
    {
        const auto* b = static_cast<const unsigned char*>(p);
        bytes_.insert(bytes_.end(), b, b + n);
    }
    std::vector<unsigned char> take() { return std::move(bytes_); }

private:
    std::vector<unsigned char> bytes_;
};

class Reader {
public:
    explicit Reader(const std::vector<unsigned char>& b) : b_(b) {}

    void need(std::size_t n) const
    {
        if (pos_ + n > b_.size()) throw FormatError("checkpoint truncated");
    }
    std::uint8_t u8()
    {
        need(1);
        return b_[pos_++];
    }
    std::uint32_t u32()
    {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }
    std::uint64_t u64()
    {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b_[pos_ + i]) << (8 * i);
        pos_ += 8;
        return v;
    }
    float f32()
    {
        const std::uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, sizeof v);
        return v;
    }
    void floats(std::vector<float>& out, std::size_t n)
    {
        need(n * sizeof(float));
        out.resize(n);
        std::memcpy(out.data(), b_.data() + pos_, n * sizeof(float));
        pos_ += n * sizeof(float);
    }
    std::string str(std::size_t n)
    {
        need(n);
        std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    bool at_end() const { return pos_ == b_.size(); }

private:
    const std::vector<unsigned char>& b_;
    std::size_t pos_ = 0;
};

constexpr std::uint32_t kMaxCount = 1u << 28;

std::uint32_t bounded(std::uint32_t v, const char* what)
{
    if (v > kMaxCount) throw FormatError(std::string("implausible ") + what + " in checkpoint");
    return v;
}

} // namespace

std::vector<unsigned char> encode_checkpoint(const QNetwork<float>& net)
{
    const NetSpec& s = net.spec();
    Writer w;
    w.raw(kCheckpointMagic, sizeof kCheckpointMagic);
    w.u32(kCheckpointVersion);
    w.u32(static_cast<std::uint32_t>(s.input_h));
    w.u32(static_cast<std::uint32_t>(s.input_w));
    w.u32(static_cast<std::uint32_t>(s.input_c));
    w.u32(static_cast<std::uint32_t>(s.convs.size()));
    for (const auto& c : s.convs) {
        w.u32(static_cast<std::uint32_t>(c.filters));
        w.u32(static_cast<std::uint32_t>(c.kernel));
        w.u32(static_cast<std::uint32_t>(c.stride));
        w.u32(c.batch_norm ? 1u : 0u);
    }
    w.u32(s.max_pool ? 1u : 0u);
    w.u32(static_cast<std::uint32_t>(s.fc_units));
    w.u32(s.fc_relu ? 1u : 0u);
    w.u32(static_cast<std::uint32_t>(s.head));
    w.u32(static_cast<std::uint32_t>(s.actions));
    w.f32(s.bn_momentum);
    w.f32(s.bn_eps);
    w.u64(net.adam_steps());
    w.u32(static_cast<std::uint32_t>(net.params().size()));
    for (const auto& p : net.params()) {
        w.u32(static_cast<std::uint32_t>(p.name.size()));
        w.raw(p.name.data(), p.name.size());
        w.u32(static_cast<std::uint32_t>(p.shape.size()));
        for (int d : p.shape) w.u32(static_cast<std::uint32_t>(d));
        w.u8(p.trainable ? 1 : 0);
        w.floats(p.value);
        if (p.trainable) {
            w.floats(p.adam_m);
            w.floats(p.adam_v);
        }
    }
    return w.take();
}

QNetwork<float> decode_checkpoint(const std::vector<unsigned char>& bytes, const std::optional<NetSpec>& expected)
{
    Reader r(bytes);
    if (r.str(sizeof kCheckpointMagic) != std::string(kCheckpointMagic, sizeof kCheckpointMagic)) {
        throw FormatError("not an RLQNET1 checkpoint");
    }
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion) {
        throw FormatError("unsupported checkpoint version " + std::to_string(version));
    }
    NetSpec s;
    s.input_h = static_cast<int>(bounded(r.u32(), "input height"));
    s.input_w = static_cast<int>(bounded(r.u32(), "input width"));
    s.input_c = static_cast<int>(bounded(r.u32(), "input channels"));
    const std::uint32_t nconv = r.u32();
    if (nconv > 64) throw FormatError("implausible conv layer count in checkpoint");
    s.convs.clear();
    for (std::uint32_t i = 0; i < nconv; ++i) {
        ConvSpec c;
        c.filters = static_cast<int>(bounded(r.u32(), "filter count"));
        c.kernel = static_cast<int>(bounded(r.u32(), "kernel size"));
        c.stride = static_cast<int>(bounded(r.u32(), "stride"));
        c.batch_norm = r.u32() != 0;
        s.convs.push_back(c);
    }
    s.max_pool = r.u32() != 0;
    s.fc_units = static_cast<int>(bounded(r.u32(), "fc width"));
    s.fc_relu = r.u32() != 0;
    const std::uint32_t head = r.u32();
    if (head > static_cast<std::uint32_t>(HeadKind::DuelingMean)) throw FormatError("unknown head kind in checkpoint");
    s.head = static_cast<HeadKind>(head);
    s.actions = static_cast<int>(bounded(r.u32(), "action count"));
    s.bn_momentum = r.f32();
    s.bn_eps = r.f32();
    try {
        s.validate();
    } catch (const ConfigError& e) {
        throw FormatError(std::string("checkpoint architecture invalid: ") + e.what());
    }
    if (expected && !(*expected == s)) {
        throw FormatError("checkpoint architecture does not match the configured network");
    }

    QNetwork<float> net(s, 0);
    net.set_adam_steps(r.u64());
    const std::uint32_t count = r.u32();
    if (count != net.params().size()) throw FormatError("checkpoint tensor count does not match architecture");
    for (auto& p : net.params()) {
        const std::uint32_t name_len = r.u32();
        if (name_len > 256) throw FormatError("implausible tensor name length");
        const std::string name = r.str(name_len);
        if (name != p.name) throw FormatError("checkpoint tensor order mismatch at " + name);
        const std::uint32_t rank = r.u32();
        if (rank != p.shape.size()) throw FormatError("tensor rank mismatch for " + name);
        for (int d : p.shape) {
            if (r.u32() != static_cast<std::uint32_t>(d)) throw FormatError("tensor shape mismatch for " + name);
        }
        const bool trainable = r.u8() != 0;
        if (trainable != p.trainable) throw FormatError("trainable flag mismatch for " + name);
        const std::size_t n = p.value.size();
        r.floats(p.value, n);
        if (p.trainable) {
            r.floats(p.adam_m, n);
            r.floats(p.adam_v, n);
        }
    }
    if (!r.at_end()) throw FormatError("trailing bytes after checkpoint payload");
    return net;
}

void save_checkpoint(const QNetwork<float>& net, const std::filesystem::path& path)
{
    // Write-then-rename so an interrupted save never leaves a torn file.
    const auto bytes = encode_checkpoint(net);
    auto tmp = path;
    tmp += ".tmp";
    write_file_bytes(tmp, bytes);
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot move checkpoint into place at " + path.string() + ": " + ec.message());
}

QNetwork<float> load_checkpoint(const std::filesystem::path& path, const std::optional<NetSpec>& expected)
{
    return decode_checkpoint(read_file_bytes(path), expected);
}

} // namespace rlalign::nn
