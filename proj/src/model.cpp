#include "fundus/model.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <cblas.h>

#include "fundus/errors.hpp"

namespace fundus {

struct UnitRecord {
    Tensor input;
    std::vector<std::uint8_t> keep;  // empty when dropout was inactive
    Tensor output;                   // post-ReLU
};

struct PoolRecord {
    std::vector<std::uint8_t> argmax;  // 0..3 inside each 2x2 window
    int in_height = 0;
    int in_width = 0;
};

struct ForwardTape {
    std::vector<UnitRecord> units;
    std::vector<PoolRecord> pools;
    std::vector<int> skip_channels;
    Tensor head_input;
    std::vector<double> probs;
    float dropout_scale = 1.0f;
};

namespace {

constexpr double kProbabilityFloor = 1e-7;
constexpr std::size_t kIm2colBudget = std::size_t{1} << 22;  // floats per column chunk

std::vector<float>& scratch(int slot, std::size_t n)
{
    thread_local std::array<std::vector<float>, 2> buffers;
    auto& b = buffers[static_cast<std::size_t>(slot)];
    if (b.size() < n) {
        b.resize(n);
    }
    return b;
}

int chunk_rows(int k_size, const Tensor& x)
{
    const std::size_t per_row = static_cast<std::size_t>(k_size) * x.width;
    return static_cast<int>(std::clamp<std::size_t>(kIm2colBudget / std::max<std::size_t>(per_row, 1), 1, x.height));
}

// Column matrix for output rows [y0, y0 + rows): (C*k*k) x (rows*W), zero padded ("same").
void im2col(const Tensor& x, int k, int y0, int rows, float* col)
{
    const int pad = k / 2;
    const int w = x.width;
    const std::size_t n = static_cast<std::size_t>(rows) * w;
    std::size_t row_index = 0;
    for (int c = 0; c < x.channels; ++c) {
        const float* plane = x.data.data() + c * x.plane();
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx, ++row_index) {
                float* dst = col + row_index * n;
                const int x_lo = std::max(0, pad - kx);
                const int x_hi = std::min(w, w + pad - kx);
                for (int r = 0; r < rows; ++r) {
                    float* out = dst + static_cast<std::size_t>(r) * w;
                    const int iy = y0 + r + ky - pad;
                    if (iy < 0 || iy >= x.height || x_hi <= x_lo) {
                        std::fill(out, out + w, 0.0f);
                        continue;
                    }
                    const float* src = plane + static_cast<std::size_t>(iy) * w + (kx - pad);
                    std::fill(out, out + x_lo, 0.0f);
                    std::copy(src + x_lo, src + x_hi, out + x_lo);
                    std::fill(out + x_hi, out + w, 0.0f);
                }
            }
        }
    }
}

void col2im_add(const float* col, int k, int y0, int rows, Tensor& dx)
{
    const int pad = k / 2;
    const int w = dx.width;
    const std::size_t n = static_cast<std::size_t>(rows) * w;
    std::size_t row_index = 0;
    for (int c = 0; c < dx.channels; ++c) {
        float* plane = dx.data.data() + c * dx.plane();
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx, ++row_index) {
                const float* src = col + row_index * n;
                const int x_lo = std::max(0, pad - kx);
                const int x_hi = std::min(w, w + pad - kx);
                for (int r = 0; r < rows; ++r) {
                    const int iy = y0 + r + ky - pad;
                    if (iy < 0 || iy >= dx.height) {
                        continue;
                    }
                    const float* in = src + static_cast<std::size_t>(r) * w;
                    float* out = plane + static_cast<std::size_t>(iy) * w + (kx - pad);
                    for (int xx = x_lo; xx < x_hi; ++xx) {
                        out[xx] += in[xx];
                    }
                }
            }
        }
    }
}

Tensor conv_forward(const Tensor& x, int out_channels, int k, const float* weight, const float* bias)
{
    Tensor y(out_channels, x.height, x.width);
    const int k_size = x.channels * k * k;
    const int hw = static_cast<int>(x.plane());
    const int step = chunk_rows(k_size, x);
    for (int y0 = 0; y0 < x.height; y0 += step) {
        const int rows = std::min(step, x.height - y0);
        const int n = rows * x.width;
        const float* col = nullptr;
        if (k == 1) {
            col = x.data.data() + static_cast<std::size_t>(y0) * x.width;
        } else {
            auto& buf = scratch(0, static_cast<std::size_t>(k_size) * n);
            im2col(x, k, y0, rows, buf.data());
            col = buf.data();
        }
        const int ldb = k == 1 ? hw : n;
        cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, out_channels, n, k_size, 1.0f, weight, k_size, col, ldb,
                    0.0f, y.data.data() + static_cast<std::size_t>(y0) * x.width, hw);
    }
    for (int c = 0; c < out_channels; ++c) {
        auto ch = y.channel(c);
        const float b = bias[c];
        for (float& v : ch) {
            v += b;
        }
    }
    return y;
}

// Accumulates weight/bias gradients; returns dL/dx when requested.
Tensor conv_backward(const Tensor& x, const Tensor& dy, int k, const float* weight, float* dweight, float* dbias,
                     bool need_input_grad)
{
    const int out_channels = dy.channels;
    const int k_size = x.channels * k * k;
    const int hw = static_cast<int>(x.plane());
    Tensor dx;
    if (need_input_grad) {
        dx = Tensor(x.channels, x.height, x.width);
    }
    for (int c = 0; c < out_channels; ++c) {
        double s = 0.0;
        for (float v : dy.channel(c)) {
            s += v;
        }
        dbias[c] += static_cast<float>(s);
    }
    const int step = chunk_rows(k_size, x);
    for (int y0 = 0; y0 < x.height; y0 += step) {
        const int rows = std::min(step, x.height - y0);
        const int n = rows * x.width;
        const std::size_t offset = static_cast<std::size_t>(y0) * x.width;
        const float* col = nullptr;
        int ldcol = n;
        if (k == 1) {
            col = x.data.data() + offset;
            ldcol = hw;
        } else {
            auto& buf = scratch(0, static_cast<std::size_t>(k_size) * n);
            im2col(x, k, y0, rows, buf.data());
            col = buf.data();
        }
        cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasTrans, out_channels, k_size, n, 1.0f, dy.data.data() + offset, hw,
                    col, ldcol, 1.0f, dweight, k_size);
        if (!need_input_grad) {
            continue;
        }
        if (k == 1) {
            cblas_sgemm(CblasRowMajor, CblasTrans, CblasNoTrans, k_size, n, out_channels, 1.0f, weight, k_size,
                        dy.data.data() + offset, hw, 1.0f, dx.data.data() + offset, hw);
        } else {
            auto& dcol = scratch(1, static_cast<std::size_t>(k_size) * n);
            cblas_sgemm(CblasRowMajor, CblasTrans, CblasNoTrans, k_size, n, out_channels, 1.0f, weight, k_size,
                        dy.data.data() + offset, hw, 0.0f, dcol.data(), n);
            col2im_add(dcol.data(), k, y0, rows, dx);
        }
    }
    return dx;
}

Tensor max_pool(const Tensor& x, PoolRecord* record)
{
    Tensor y(x.channels, x.height / 2, x.width / 2);
    if (record != nullptr) {
        record->argmax.assign(y.size(), 0);
        record->in_height = x.height;
        record->in_width = x.width;
    }
    std::size_t o = 0;
    for (int c = 0; c < x.channels; ++c) {
        for (int yy = 0; yy < y.height; ++yy) {
            for (int xx = 0; xx < y.width; ++xx, ++o) {
                const float v[4] = {x.at(c, 2 * yy, 2 * xx), x.at(c, 2 * yy, 2 * xx + 1), x.at(c, 2 * yy + 1, 2 * xx),
                                    x.at(c, 2 * yy + 1, 2 * xx + 1)};
                std::uint8_t best = 0;
                for (std::uint8_t i = 1; i < 4; ++i) {
                    if (v[i] > v[best]) {
                        best = i;
                    }
                }
                y.data[o] = v[best];
                if (record != nullptr) {
                    record->argmax[o] = best;
                }
            }
        }
    }
    return y;
}

Tensor max_pool_backward(const Tensor& dy, const PoolRecord& record)
{
    Tensor dx(dy.channels, record.in_height, record.in_width);
    std::size_t o = 0;
    for (int c = 0; c < dy.channels; ++c) {
        for (int yy = 0; yy < dy.height; ++yy) {
            for (int xx = 0; xx < dy.width; ++xx, ++o) {
                const int a = record.argmax[o];
                dx.at(c, 2 * yy + a / 2, 2 * xx + a % 2) += dy.data[o];
            }
        }
    }
    return dx;
}

Tensor upsample(const Tensor& x)
{
    Tensor y(x.channels, x.height * 2, x.width * 2);
    for (int c = 0; c < x.channels; ++c) {
        for (int yy = 0; yy < y.height; ++yy) {
            for (int xx = 0; xx < y.width; ++xx) {
                y.at(c, yy, xx) = x.at(c, yy / 2, xx / 2);
            }
        }
    }
    return y;
}

Tensor upsample_backward(const Tensor& dy, int channels)
{
    Tensor dx(channels, dy.height / 2, dy.width / 2);
    for (int c = 0; c < channels; ++c) {
        for (int yy = 0; yy < dy.height; ++yy) {
            for (int xx = 0; xx < dy.width; ++xx) {
                dx.at(c, yy / 2, xx / 2) += dy.at(c, yy, xx);
            }
        }
    }
    return dx;
}

Tensor concat(const Tensor& a, const Tensor& b)
{
    Tensor y(a.channels + b.channels, a.height, a.width);
    std::copy(a.data.begin(), a.data.end(), y.data.begin());
    std::copy(b.data.begin(), b.data.end(), y.data.begin() + static_cast<std::ptrdiff_t>(a.size()));
    return y;
}

// Little-endian binary helpers.
template <typename T>
void put(std::ostream& out, T value)
{
    static_assert(std::is_trivially_copyable_v<T>);
    std::array<char, sizeof(T)> bytes;
    std::memcpy(bytes.data(), &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) {
        std::reverse(bytes.begin(), bytes.end());
    }
    out.write(bytes.data(), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::filesystem::path& path)
{
    std::array<char, sizeof(T)> bytes;
    if (!in.read(bytes.data(), sizeof(T))) {
        throw DataError("weight file " + path.string() + ": truncated");
    }
    if constexpr (std::endian::native == std::endian::big) {
        std::reverse(bytes.begin(), bytes.end());
    }
    T value;
    std::memcpy(&value, bytes.data(), sizeof(T));
    return value;
}

}  // namespace

void ModelConfig::validate() const
{
    if (filters < 1) {
        throw std::invalid_argument("ModelConfig: filter count must be at least 1");
    }
    if (depth < 1) {
        throw std::invalid_argument("ModelConfig: depth must be at least 1");
    }
    if (!(dropout >= 0.0 && dropout < 1.0)) {
        throw std::invalid_argument("ModelConfig: dropout rate must lie in [0,1)");
    }
    if (kernel < 1 || kernel % 2 == 0) {
        throw std::invalid_argument("ModelConfig: kernel size must be odd and positive");
    }
    if (input_channels < 1) {
        throw std::invalid_argument("ModelConfig: input channel count must be at least 1");
    }
    validate_input(input_rows, input_cols, input_channels);
}

void ModelConfig::validate_input(int rows, int cols, int channels) const
{
    const int factor = 1 << depth;
    if (rows < factor || cols < factor || rows % factor != 0 || cols % factor != 0) {
        throw std::invalid_argument("input " + std::to_string(rows) + "x" + std::to_string(cols) +
                                    " is not divisible by 2^depth = " + std::to_string(factor));
    }
    if (channels != input_channels) {
        throw std::invalid_argument("input has " + std::to_string(channels) + " channels, model expects " +
                                    std::to_string(input_channels));
    }
}

std::string describe(const ModelConfig& cfg)
{
    std::ostringstream out;
    out << "input " << cfg.input_rows << "x" << cfg.input_cols << "x" << cfg.input_channels << ", filters "
        << cfg.filters << ", depth " << cfg.depth << ", dropout " << cfg.dropout << ", kernel " << cfg.kernel;
    return out.str();
}

SegmentationModel::SegmentationModel(const ModelConfig& cfg, std::uint64_t init_seed) : config_(cfg)
{
    config_.validate();
    std::mt19937_64 rng(init_seed);
    const int f = cfg.filters;
    const int k = cfg.kernel;
    for (int s = 0; s < cfg.depth; ++s) {
        add_conv("enc" + std::to_string(s) + ".conv0", s == 0 ? cfg.input_channels : f, f, k, rng);
        add_conv("enc" + std::to_string(s) + ".conv1", f, f, k, rng);
    }
    add_conv("bottleneck.conv0", f, f, k, rng);
    add_conv("bottleneck.conv1", f, f, k, rng);
    for (int s = 0; s < cfg.depth; ++s) {
        add_conv("dec" + std::to_string(s) + ".conv0", 2 * f, f, k, rng);
        add_conv("dec" + std::to_string(s) + ".conv1", f, f, k, rng);
    }
    add_conv("head", f, 1, 1, rng);
    head_ = units_.back();
    units_.pop_back();
}

void SegmentationModel::add_conv(const std::string& name, int in_channels, int out_channels, int kernel,
                                 std::mt19937_64& rng)
{
    const std::size_t fan_in = static_cast<std::size_t>(in_channels) * kernel * kernel;
    const float limit = static_cast<float>(std::sqrt(6.0 / static_cast<double>(fan_in)));
    std::uniform_real_distribution<float> dist(-limit, limit);
    ParameterArray w{name + ".weight", {out_channels, in_channels, kernel, kernel}, {}};
    w.values.resize(fan_in * out_channels);
    for (float& v : w.values) {
        v = dist(rng);
    }
    ParameterArray b{name + ".bias", {out_channels}, std::vector<float>(static_cast<std::size_t>(out_channels), 0.0f)};
    units_.push_back({in_channels, out_channels, kernel, params_.size()});
    params_.push_back(std::move(w));
    params_.push_back(std::move(b));
}

std::size_t SegmentationModel::parameter_count() const
{
    std::size_t n = 0;
    for (const auto& p : params_) {
        n += p.values.size();
    }
    return n;
}

std::size_t count_parameters(const SegmentationModel& model)
{
    return model.parameter_count();
}

ParameterGradients SegmentationModel::zero_gradients() const
{
    ParameterGradients g;
    g.reserve(params_.size());
    for (const auto& p : params_) {
        g.emplace_back(p.values.size(), 0.0f);
    }
    return g;
}

ProbabilityMap SegmentationModel::run(const Tensor& input, ForwardTape* tape, std::mt19937_64* rng) const
{
    config_.validate_input(input.height, input.width, input.channels);
    const bool dropout_on = tape != nullptr && rng != nullptr && config_.dropout > 0.0;
    const float keep_prob = static_cast<float>(1.0 - config_.dropout);
    const float scale = 1.0f / keep_prob;
    if (tape != nullptr) {
        tape->dropout_scale = scale;
    }

    auto unit = [&](std::size_t index, Tensor x) {
        const Conv& conv = units_[index];
        Tensor z = conv_forward(x, conv.out_channels, conv.kernel, params_[conv.weight].values.data(),
                                params_[conv.weight + 1].values.data());
        std::vector<std::uint8_t> keep;
        if (dropout_on) {
            keep.resize(z.size());
            for (std::size_t i = 0; i < z.size(); ++i) {
                const bool k = static_cast<float>((*rng)() >> 40) * 0x1.0p-24f < keep_prob;
                keep[i] = k ? 1 : 0;
                z.data[i] = k ? z.data[i] * scale : 0.0f;
            }
        }
        for (float& v : z.data) {
            v = std::max(v, 0.0f);
        }
        if (tape != nullptr) {
            tape->units.push_back({std::move(x), std::move(keep), z});
        }
        return z;
    };

    const int depth = config_.depth;
    std::vector<Tensor> skips;
    skips.reserve(static_cast<std::size_t>(depth));
    Tensor x = input;
    std::size_t u = 0;
    for (int s = 0; s < depth; ++s) {
        x = unit(u++, std::move(x));
        x = unit(u++, std::move(x));
        skips.push_back(x);
        PoolRecord* record = nullptr;
        if (tape != nullptr) {
            tape->pools.emplace_back();
            record = &tape->pools.back();
        }
        x = max_pool(x, record);
    }
    x = unit(u++, std::move(x));
    x = unit(u++, std::move(x));
    for (int s = 0; s < depth; ++s) {
        const Tensor& skip = skips[static_cast<std::size_t>(depth - 1 - s)];
        x = concat(upsample(x), skip);
        x = unit(u++, std::move(x));
        x = unit(u++, std::move(x));
    }
    Tensor z = conv_forward(x, 1, 1, params_[head_.weight].values.data(), params_[head_.weight + 1].values.data());
    std::vector<double> probs(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) {
        const double p = 1.0 / (1.0 + std::exp(-static_cast<double>(z.data[i])));
        probs[i] = std::clamp(p, kProbabilityFloor, 1.0 - kProbabilityFloor);
    }
    if (tape != nullptr) {
        tape->head_input = std::move(x);
        tape->probs = probs;
    }
    return {input.height, input.width, std::move(probs)};
}

ProbabilityMap SegmentationModel::predict(const Tensor& input) const
{
    return run(input, nullptr, nullptr);
}

TrainingPass SegmentationModel::forward_train(const Tensor& input, std::mt19937_64& rng) const
{
    auto tape = std::make_unique<ForwardTape>();
    auto out = run(input, tape.get(), &rng);
    return {*this, std::move(tape), std::move(out)};
}

ParameterGradients SegmentationModel::backprop(const ForwardTape& tape, const RealGrid& grad_output) const
{
    const Tensor& head_in = tape.head_input;
    if (grad_output.rows() != head_in.height || grad_output.cols() != head_in.width) {
        throw std::invalid_argument("backward: gradient shape does not match the forward output");
    }
    ParameterGradients grads = zero_gradients();

    Tensor dz(1, head_in.height, head_in.width);
    auto gv = grad_output.values();
    for (std::size_t i = 0; i < dz.size(); ++i) {
        const double p = tape.probs[i];
        dz.data[i] = static_cast<float>(gv[i] * p * (1.0 - p));
    }
    Tensor g = conv_backward(head_in, dz, 1, params_[head_.weight].values.data(), grads[head_.weight].data(),
                             grads[head_.weight + 1].data(), true);

    auto unit_back = [&](std::size_t index, Tensor dy, bool need_input_grad) {
        const UnitRecord& rec = tape.units[index];
        const Conv& conv = units_[index];
        for (std::size_t i = 0; i < dy.size(); ++i) {
            if (rec.output.data[i] <= 0.0f) {
                dy.data[i] = 0.0f;
            } else if (!rec.keep.empty()) {
                dy.data[i] *= tape.dropout_scale;
            }
        }
        return conv_backward(rec.input, dy, conv.kernel, params_[conv.weight].values.data(),
                             grads[conv.weight].data(), grads[conv.weight + 1].data(), need_input_grad);
    };

    const int depth = config_.depth;
    const int f = config_.filters;
    std::vector<Tensor> skip_grads(static_cast<std::size_t>(depth));
    std::size_t u = units_.size();
    for (int s = depth - 1; s >= 0; --s) {
        g = unit_back(--u, std::move(g), true);
        g = unit_back(--u, std::move(g), true);
        // g is w.r.t. concat(upsampled, skip)
        const int level = depth - 1 - s;
        Tensor skip_grad(f, g.height, g.width);
        std::copy(g.data.begin() + static_cast<std::ptrdiff_t>(f * g.plane()), g.data.end(), skip_grad.data.begin());
        skip_grads[static_cast<std::size_t>(level)] = std::move(skip_grad);
        g = upsample_backward(g, f);
    }
    g = unit_back(--u, std::move(g), true);
    g = unit_back(--u, std::move(g), true);
    for (int s = depth - 1; s >= 0; --s) {
        g = max_pool_backward(g, tape.pools[static_cast<std::size_t>(s)]);
        const Tensor& sg = skip_grads[static_cast<std::size_t>(s)];
        for (std::size_t i = 0; i < g.size(); ++i) {
            g.data[i] += sg.data[i];
        }
        g = unit_back(--u, std::move(g), true);
        g = unit_back(--u, std::move(g), s != 0);
    }
    return grads;
}

TrainingPass::TrainingPass(const SegmentationModel& model, std::unique_ptr<ForwardTape> tape, ProbabilityMap output)
    : model_(&model), tape_(std::move(tape)), output_(std::move(output))
{
}
TrainingPass::TrainingPass(TrainingPass&&) noexcept = default;
TrainingPass& TrainingPass::operator=(TrainingPass&&) noexcept = default;
TrainingPass::~TrainingPass() = default;

ParameterGradients TrainingPass::backward(const RealGrid& grad_output) const
{
    return model_->backprop(*tape_, grad_output);
}

void save_weights(const SegmentationModel& model, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot open " + path.string() + " for writing");
    }
    const auto& cfg = model.config();
    out.write(kWeightFileMagic, sizeof(kWeightFileMagic));
    put<std::uint32_t>(out, kWeightFileVersion);
    put<std::int32_t>(out, cfg.input_rows);
    put<std::int32_t>(out, cfg.input_cols);
    put<std::int32_t>(out, cfg.input_channels);
    put<std::int32_t>(out, cfg.filters);
    put<std::int32_t>(out, cfg.depth);
    put<std::int32_t>(out, cfg.kernel);
    put<double>(out, cfg.dropout);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(model.parameters().size()));
    for (const auto& p : model.parameters()) {
        put<std::uint32_t>(out, static_cast<std::uint32_t>(p.name.size()));
        out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
        put<std::uint32_t>(out, static_cast<std::uint32_t>(p.shape.size()));
        for (int d : p.shape) {
            put<std::int32_t>(out, d);
        }
        put<std::uint64_t>(out, p.values.size());
        for (float v : p.values) {
            put<float>(out, v);
        }
    }
    if (!out) {
        throw std::runtime_error("failed writing " + path.string());
    }
}

namespace {

ModelConfig read_header(std::istream& in, const std::filesystem::path& path)
{
    char magic[sizeof(kWeightFileMagic)];
    if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kWeightFileMagic, sizeof(magic)) != 0) {
        throw DataError("weight file " + path.string() + ": bad magic header");
    }
    const auto version = get<std::uint32_t>(in, path);
    if (version != kWeightFileVersion) {
        throw DataError("weight file " + path.string() + ": unsupported format version " + std::to_string(version));
    }
    ModelConfig cfg;
    cfg.input_rows = get<std::int32_t>(in, path);
    cfg.input_cols = get<std::int32_t>(in, path);
    cfg.input_channels = get<std::int32_t>(in, path);
    cfg.filters = get<std::int32_t>(in, path);
    cfg.depth = get<std::int32_t>(in, path);
    cfg.kernel = get<std::int32_t>(in, path);
    cfg.dropout = get<double>(in, path);
    try {
        cfg.validate();
    } catch (const std::invalid_argument& e) {
        throw DataError("weight file " + path.string() + ": invalid stored config: " + e.what());
    }
    return cfg;
}

std::ifstream open_weights(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open weight file " + path.string());
    }
    return in;
}

SegmentationModel read_body(std::istream& in, const ModelConfig& cfg, const std::filesystem::path& path)
{
    SegmentationModel model(cfg);
    auto& params = model.mutable_parameters();
    const auto count = get<std::uint32_t>(in, path);
    if (count != params.size()) {
        throw DataError("weight file " + path.string() + ": expected " + std::to_string(params.size()) +
                        " arrays, found " + std::to_string(count));
    }
    for (auto& p : params) {
        const auto name_len = get<std::uint32_t>(in, path);
        if (name_len > 4096) {
            throw DataError("weight file " + path.string() + ": corrupt array name");
        }
        std::string name(name_len, '\0');
        if (!in.read(name.data(), name_len)) {
            throw DataError("weight file " + path.string() + ": truncated");
        }
        if (name != p.name) {
            throw DataError("weight file " + path.string() + ": expected array " + p.name + ", found " + name);
        }
        const auto rank = get<std::uint32_t>(in, path);
        std::vector<int> shape;
        for (std::uint32_t i = 0; i < rank && i < 8; ++i) {
            shape.push_back(get<std::int32_t>(in, path));
        }
        if (shape != p.shape) {
            throw DataError("weight file " + path.string() + ": shape mismatch for " + p.name);
        }
        const auto n = get<std::uint64_t>(in, path);
        if (n != p.values.size()) {
            throw DataError("weight file " + path.string() + ": size mismatch for " + p.name);
        }
        for (float& v : p.values) {
            v = get<float>(in, path);
        }
    }
    return model;
}

}  // namespace

ModelConfig read_weight_config(const std::filesystem::path& path)
{
    auto in = open_weights(path);
    return read_header(in, path);
}

SegmentationModel load_weights(const ModelConfig& cfg, const std::filesystem::path& path)
{
    auto in = open_weights(path);
    const ModelConfig stored = read_header(in, path);
    if (!(stored == cfg)) {
        throw DataError("weight file " + path.string() + ": stored config (" + describe(stored) +
                        ") does not match requested config (" + describe(cfg) + ")");
    }
    return read_body(in, stored, path);
}

SegmentationModel load_weights(const std::filesystem::path& path)
{
    auto in = open_weights(path);
    const ModelConfig stored = read_header(in, path);
    return read_body(in, stored, path);
}

}  // namespace fundus
