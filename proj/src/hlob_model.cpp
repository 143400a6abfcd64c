#include "hloblab/hlob_model.hpp"

#include "hloblab/digest.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

namespace hloblab::model {

namespace {

std::string join_sizes(const std::array<std::size_t, 3>& values) {
    return std::to_string(values[0]) + "," + std::to_string(values[1]) + "," + std::to_string(values[2]);
}

std::string format_real(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

void HlobConfig::validate() const {
    auto fail = [](const std::string& what) { throw Error(ErrorCode::ConfigInconsistent, what); };
    if (window == 0 || channels == 0 || lstm_hidden == 0 || classes < 2 || time_kernel == 0) {
        fail("window, channels, hidden size and time kernel must be positive; classes >= 2");
    }
    if (!(dropout >= 0.0 && dropout < 1.0)) {
        fail("dropout rate must lie in [0, 1)");
    }
    for (std::size_t h = 0; h < 3; ++h) {
        if (arities[h] == 0 || cardinalities[h] == 0) {
            fail(std::string("head ") + kHeadNames[h] + " has zero arity or cardinality");
        }
        if (widths[h] != cardinalities[h] * arities[h] * 2) {
            fail(std::string("head ") + kHeadNames[h] + ": width " + std::to_string(widths[h]) +
                 " != cardinality " + std::to_string(cardinalities[h]) + " x arity " + std::to_string(arities[h]) +
                 " x 2");
        }
    }
}

std::string HlobConfig::canonical() const {
    std::ostringstream out;
    out << "window=" << window << ";channels=" << channels << ";widths=" << join_sizes(widths)
        << ";arities=" << join_sizes(arities) << ";cardinalities=" << join_sizes(cardinalities)
        << ";dropout=" << format_real(dropout) << ";lstm_hidden=" << lstm_hidden << ";classes=" << classes
        << ";leaky_slope=" << format_real(leaky_slope) << ";time_kernel=" << time_kernel;
    return out.str();
}

std::uint64_t HlobConfig::digest() const { return fnv1a(canonical()); }

HlobConfig HlobConfig::for_complex(const infonet::SimplicialComplex& complex, std::size_t window) {
    HlobConfig config;
    config.window = window;
    config.cardinalities = {complex.tetrahedra.size(), complex.triangles.size(), complex.edges.size()};
    for (std::size_t h = 0; h < 3; ++h) {
        config.widths[h] = config.cardinalities[h] * config.arities[h] * 2;
    }
    config.validate();
    return config;
}

template <typename Real>
std::size_t HlobModel<Real>::add_parameter(std::string name, nn::Shape shape, std::size_t fan_in,
                                           std::mt19937_64& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<Real> values(nn::shape_numel(shape));
    for (auto& v : values) {
        v = static_cast<Real>(dist(rng));
    }
    params_.emplace_back(std::move(name), nn::Tensor<Real>(std::move(shape), std::move(values), true));
    return params_.size() - 1;
}

template <typename Real>
HlobModel<Real>::HlobModel(HlobConfig config, std::uint64_t seed) : config_(config) {
    config_.validate();
    std::mt19937_64 rng(seed);
    const std::size_t C = config_.channels;
    const std::size_t k = config_.time_kernel;
    const std::size_t pad_top = (k - 1) / 2;
    const std::size_t pad_bottom = k - 1 - pad_top;

    auto conv = [&](const std::string& prefix, std::size_t in_ch, std::size_t kh, std::size_t kw,
                    nn::Conv2dOptions options) {
        const std::size_t fan_in = in_ch * kh * kw;
        ConvRef ref{};
        ref.weight = add_parameter(prefix + ".weight", {C, in_ch, kh, kw}, fan_in, rng);
        ref.bias = add_parameter(prefix + ".bias", {C}, fan_in, rng);
        ref.options = options;
        return ref;
    };

    for (std::size_t h = 0; h < 3; ++h) {
        const std::string base = std::string("head.") + kHeadNames[h];
        const std::size_t arity = config_.arities[h];
        HeadLayers& layers = heads_[h];
        layers.conv_pv = conv(base + ".conv_pv", 1, 1, 2, {.stride_h = 1, .stride_w = 2});
        layers.conv_simplex = conv(base + ".block2.conv_simplex", C, 1, arity, {.stride_h = 1, .stride_w = arity});
        layers.conv_time1 = conv(base + ".block2.conv_time1", C, k, 1, {.pad_top = pad_top, .pad_bottom = pad_bottom});
        layers.conv_time2 = conv(base + ".block2.conv_time2", C, k, 1, {.pad_top = pad_top, .pad_bottom = pad_bottom});
        layers.conv3 = conv(base + ".conv3", C, 1, config_.cardinalities[h], {});
    }

    const std::size_t H = config_.lstm_hidden;
    const std::size_t I = 3 * C;
    lstm_wih_ = add_parameter("lstm.weight_ih", {4 * H, I}, I, rng);
    lstm_whh_ = add_parameter("lstm.weight_hh", {4 * H, H}, H, rng);
    lstm_bih_ = add_parameter("lstm.bias_ih", {4 * H}, I, rng);
    lstm_bhh_ = add_parameter("lstm.bias_hh", {4 * H}, H, rng);
    out_w_ = add_parameter("out.weight", {config_.classes, H}, H, rng);
    out_b_ = add_parameter("out.bias", {config_.classes}, H, rng);
}

template <typename Real>
nn::Parameter<Real>& HlobModel<Real>::parameter(std::string_view name) {
    for (auto& p : params_) {
        if (p.name == name) {
            return p;
        }
    }
    throw Error(ErrorCode::InvalidArgument, "no parameter named '" + std::string(name) + "'");
}

template <typename Real>
std::size_t HlobModel<Real>::parameter_count() const {
    std::size_t total = 0;
    for (const auto& p : params_) {
        total += p.tensor.numel();
    }
    return total;
}

template <typename Real>
nn::Tensor<Real> HlobModel<Real>::apply_conv(const TensorT& x, const ConvRef& conv) const {
    auto y = nn::conv2d(x, params_[conv.weight].tensor, params_[conv.bias].tensor, conv.options);
    return nn::leaky_relu(y, static_cast<Real>(config_.leaky_slope));
}

template <typename Real>
nn::Tensor<Real> HlobModel<Real>::forward(const HeadTensors& heads, nn::Mode mode, std::mt19937_64* rng,
                                          std::vector<ShapeProbe>* probes) const {
    if (mode == nn::Mode::Train && config_.dropout > 0.0 && rng == nullptr) {
        throw Error(ErrorCode::InvalidArgument, "train-mode forward needs a random generator for dropout");
    }
    std::mt19937_64 unused(0);
    std::mt19937_64& gen = rng != nullptr ? *rng : unused;
    auto probe = [&](std::string name, const TensorT& t) {
        if (probes != nullptr) {
            probes->push_back({std::move(name), t.shape()});
        }
    };

    const std::size_t N = heads[0].defined() && heads[0].rank() == 4 ? heads[0].dim(0) : 0;
    std::vector<TensorT> sequences;
    for (std::size_t h = 0; h < 3; ++h) {
        const auto& x = heads[h];
        const nn::Shape expected{N, 1, config_.window, config_.widths[h]};
        if (!x.defined() || x.shape() != expected) {
            throw Error(ErrorCode::ShapeMismatch,
                        std::string("head ") + kHeadNames[h] + " expects " + nn::shape_string(expected) + ", got " +
                            (x.defined() ? nn::shape_string(x.shape()) : std::string("undefined")));
        }
        const std::string base = std::string("head.") + kHeadNames[h];
        const HeadLayers& layers = heads_[h];
        probe(base + ".input", x);
        auto y = apply_conv(x, layers.conv_pv);
        probe(base + ".conv_pv", y);
        y = apply_conv(y, layers.conv_simplex);
        probe(base + ".block2.conv_simplex", y);
        y = apply_conv(y, layers.conv_time1);
        probe(base + ".block2.conv_time1", y);
        y = apply_conv(y, layers.conv_time2);
        probe(base + ".block2.conv_time2", y);
        y = apply_conv(y, layers.conv3);
        y = nn::dropout(y, config_.dropout, mode, gen);
        probe(base + ".conv3", y);
        auto seq = nn::channels_to_sequence(y);
        probe(base + ".sequence", seq);
        sequences.push_back(std::move(seq));
    }
    auto merged = nn::concat_last(sequences);
    probe("concat", merged);
    auto rnn = nn::lstm(merged, params_[lstm_wih_].tensor, params_[lstm_whh_].tensor, params_[lstm_bih_].tensor,
                        params_[lstm_bhh_].tensor);
    probe("lstm.output", rnn.output);
    probe("lstm.h_n", rnn.h_n);
    auto logits = nn::linear(rnn.h_n, params_[out_w_].tensor, params_[out_b_].tensor);
    probe("out", logits);
    return logits;
}

template <typename Real>
nn::Tensor<Real> HlobModel<Real>::forward_windows(const TensorT& windows,
                                                  const std::array<std::vector<std::size_t>, 3>& column_maps,
                                                  nn::Mode mode, std::mt19937_64* rng) const {
    HeadTensors heads;
    for (std::size_t h = 0; h < 3; ++h) {
        heads[h] = nn::gather_last(windows, std::span<const std::size_t>(column_maps[h]));
    }
    return forward(heads, mode, rng);
}

template <typename Real>
std::vector<LayerCount> HlobModel<Real>::layer_table() const {
    std::vector<LayerCount> rows;
    for (const auto& p : params_) {
        const auto dot = p.name.rfind('.');
        std::string layer = p.name.substr(0, dot);
        if (layer.rfind("lstm", 0) == 0) {
            layer = "lstm";
        }
        if (rows.empty() || rows.back().name != layer) {
            rows.push_back({layer, 0});
        }
        rows.back().parameters += p.tensor.numel();
    }
    return rows;
}

template <typename Real>
std::vector<LayerCount> HlobModel<Real>::component_table() const {
    std::vector<LayerCount> rows;
    for (const auto& layer : layer_table()) {
        std::string component = layer.name;
        if (const auto pos = component.find(".block2."); pos != std::string::npos) {
            component = component.substr(0, pos + 7);
        }
        if (rows.empty() || rows.back().name != component) {
            rows.push_back({component, 0});
        }
        rows.back().parameters += layer.parameters;
    }
    return rows;
}

std::vector<double> predict_proba(std::span<const double> logits, std::size_t classes) {
    if (classes == 0 || logits.size() % classes != 0) {
        throw Error(ErrorCode::ShapeMismatch, "logit buffer is not a whole number of rows");
    }
    for (std::size_t i = 0; i < logits.size(); ++i) {
        if (!std::isfinite(logits[i])) {
            throw Error(ErrorCode::NonFiniteLogit, "non-finite logit at row " + std::to_string(i / classes), i / classes);
        }
    }
    return nn::softmax_rows<double>(logits, classes);
}

// ---------------------------------------------------------------------------
// checkpoint I/O

namespace {

constexpr char kMagic[8] = {'H', 'L', 'O', 'B', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

class Writer {
public:
    template <typename T>
    void put(T value) {
        const auto* p = reinterpret_cast<const char*>(&value);
        bytes_.append(p, sizeof(T));
    }
    void put_string(const std::string& s) {
        put(static_cast<std::uint32_t>(s.size()));
        bytes_.append(s);
    }
    template <typename Real>
    void put_values(std::span<const Real> values) {
        bytes_.append(reinterpret_cast<const char*>(values.data()), values.size_bytes());
    }
    std::string& bytes() { return bytes_; }

private:
    std::string bytes_;
};

class Reader {
public:
    explicit Reader(std::string_view bytes) : bytes_(bytes) {}
    template <typename T>
    T get() {
        T value;
        need(sizeof(T));
        std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return value;
    }
    std::string get_string() {
        const auto n = get<std::uint32_t>();
        need(n);
        std::string s(bytes_.substr(pos_, n));
        pos_ += n;
        return s;
    }
    template <typename Real>
    void get_values(std::span<Real> out) {
        need(out.size_bytes());
        std::memcpy(out.data(), bytes_.data() + pos_, out.size_bytes());
        pos_ += out.size_bytes();
    }
    std::size_t position() const { return pos_; }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) {
            throw Error(ErrorCode::IoFailure, "checkpoint is truncated");
        }
    }
    std::string_view bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

template <typename Real>
void save_checkpoint(const HlobModel<Real>& model, const std::filesystem::path& path, const CheckpointMeta& meta) {
    Writer w;
    w.bytes().append(kMagic, sizeof kMagic);
    w.put(kVersion);
    w.put(static_cast<std::uint32_t>(sizeof(Real)));
    w.put(model.config().digest());
    w.put(meta.seed);
    w.put(meta.run_digest);
    w.put(meta.optimizer_step);
    w.put_string(model.config().canonical());
    w.put(static_cast<std::uint32_t>(model.parameters().size()));
    for (const auto& p : model.parameters()) {
        w.put_string(p.name);
        w.put(static_cast<std::uint32_t>(p.tensor.rank()));
        for (auto d : p.tensor.shape()) {
            w.put(static_cast<std::uint64_t>(d));
        }
        w.put_values<Real>(p.tensor.data());
        w.put_values<Real>(p.first_moment);
        w.put_values<Real>(p.second_moment);
    }
    w.put(fnv1a(w.bytes()));

    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
    }
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw Error(ErrorCode::IoFailure, "cannot open " + tmp.string() + " for writing");
        }
        out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
        if (!out) {
            throw Error(ErrorCode::IoFailure, "short write to " + tmp.string());
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        throw Error(ErrorCode::IoFailure, "cannot move checkpoint into place: " + ec.message());
    }
}

template <typename Real>
LoadedCheckpoint<Real> load_checkpoint(const std::filesystem::path& path, const HlobConfig& expected) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::IoFailure, "cannot open checkpoint " + path.string());
    }
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() < sizeof kMagic + sizeof(std::uint64_t) || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
        throw Error(ErrorCode::IoFailure, path.string() + " is not a checkpoint or is truncated");
    }
    const std::string_view body(bytes.data(), bytes.size() - sizeof(std::uint64_t));
    std::uint64_t trailer;
    std::memcpy(&trailer, bytes.data() + body.size(), sizeof trailer);

    Reader r(body);
    for (std::size_t i = 0; i < sizeof kMagic; ++i) {
        r.get<char>();
    }
    const auto version = r.get<std::uint32_t>();
    if (version != kVersion) {
        throw Error(ErrorCode::IoFailure, "unsupported checkpoint version " + std::to_string(version));
    }
    const auto scalar_bytes = r.get<std::uint32_t>();
    const auto digest = r.get<std::uint64_t>();
    CheckpointMeta meta;
    meta.seed = r.get<std::uint64_t>();
    meta.run_digest = r.get<std::uint64_t>();
    meta.optimizer_step = r.get<std::uint64_t>();
    const std::string stored_config = r.get_string();
    if (fnv1a(body) != trailer) {
        throw Error(ErrorCode::IoFailure, "checkpoint " + path.string() + " is truncated or corrupt");
    }
    if (digest != expected.digest()) {
        throw Error(ErrorCode::DigestMismatch, "checkpoint geometry {" + stored_config + "} differs from {" +
                                                   expected.canonical() + "}");
    }
    if (scalar_bytes != sizeof(Real)) {
        throw Error(ErrorCode::IoFailure, "checkpoint stores " + std::to_string(scalar_bytes * 8) +
                                              "-bit scalars, requested " + std::to_string(sizeof(Real) * 8));
    }

    LoadedCheckpoint<Real> loaded{HlobModel<Real>(expected, meta.seed), meta};
    const auto count = r.get<std::uint32_t>();
    if (count != loaded.model.parameters().size()) {
        throw Error(ErrorCode::IoFailure, "checkpoint tensor count does not match the model");
    }
    for (auto& p : loaded.model.parameters()) {
        const auto name = r.get_string();
        const auto rank = r.get<std::uint32_t>();
        nn::Shape shape(rank);
        for (auto& d : shape) {
            d = static_cast<std::size_t>(r.get<std::uint64_t>());
        }
        if (name != p.name || shape != p.tensor.shape()) {
            throw Error(ErrorCode::IoFailure, "checkpoint tensor '" + name + "' does not match '" + p.name + "'");
        }
        r.get_values<Real>(p.tensor.data());
        r.get_values<Real>(p.first_moment);
        r.get_values<Real>(p.second_moment);
    }
    if (r.position() != body.size()) {
        throw Error(ErrorCode::IoFailure, "trailing bytes in checkpoint");
    }
    return loaded;
}

template class HlobModel<float>;
template class HlobModel<double>;
template class HlobModel<long double>;
template void save_checkpoint<float>(const HlobModel<float>&, const std::filesystem::path&, const CheckpointMeta&);
template void save_checkpoint<double>(const HlobModel<double>&, const std::filesystem::path&, const CheckpointMeta&);
template LoadedCheckpoint<float> load_checkpoint<float>(const std::filesystem::path&, const HlobConfig&);
template LoadedCheckpoint<double> load_checkpoint<double>(const std::filesystem::path&, const HlobConfig&);

}  // namespace hloblab::model
