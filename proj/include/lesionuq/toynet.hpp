// toynet.hpp - a small dropout MLP with a learned-variance head.
//
// One hidden tanh layer over a flattened square patch, dropout on the
// hidden activations (inverted scaling, active at train AND test time; test
// time dropout is the whole point of MC sampling), and two scalar heads:
// a logit F and a raw variance v with V = softplus(v) >= 0.
//
// A stochastic forward pass draws one dropout mask and one Gaussian eps and
// produces y = sigmoid(F + sqrt(V) * eps); the noise path is
// reparameterized so the loss gradient reaches v. The training loss is
// weighted binary cross-entropy of the MC-averaged prediction
//   L = wbce(mean_t y_t, label),
// averaging across the MC samples before the log. Averaging the per-sample
// losses instead looks equivalent but is not: BCE is convex in the logit,
// so by Jensen any nonzero noise only raises that variant and its optimum
// pins V at 0; the variance head would never learn. Averaging predictions
// keeps a data-dependent optimum for V.
//
// Everything is double precision; draws come from the caller's rng in a
// fixed order (per sample: hidden-count dropout uniforms when dropout_p > 0,
// then one Box-Muller normal), so runs are reproducible from the seed.
#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lesionuq/errors.hpp"
#include "lesionuq/rng.hpp"
#include "lesionuq/uvol.hpp"
#include "lesionuq/volume.hpp"

namespace lesionuq {

inline double sigmoid(double z) {
    if (z >= 0.0) {
        const double e = std::exp(-z);
        return 1.0 / (1.0 + e);
    }
    const double e = std::exp(z);
    return e / (1.0 + e);
}

inline double softplus(double v) {
    // log(1 + e^v), stable on both tails.
    if (v > 30.0) return v;
    if (v < -30.0) return std::exp(v);
    return std::log1p(std::exp(v));
}

struct ToyNet {
    int input_dim = 0;  // flattened patch length
    int hidden_dim = 0;
    double dropout_p = 0.5;
    std::vector<double> w1; // hidden_dim x input_dim, row-major
    std::vector<double> b1; // hidden_dim
    std::vector<double> wf; // hidden_dim, logit head
    double bf = 0.0;
    std::vector<double> wv; // hidden_dim, raw-variance head
    double bv = 0.0;

    static ToyNet init(int input_dim, int hidden_dim, double dropout_p, std::uint64_t seed) {
        if (input_dim < 1 || hidden_dim < 1) {
            throw argument_error("ToyNet: dimensions must be positive");
        }
        if (!(dropout_p >= 0.0 && dropout_p < 1.0)) {
            throw argument_error("ToyNet: dropout_p must lie in [0,1)");
        }
        ToyNet net;
        net.input_dim = input_dim;
        net.hidden_dim = hidden_dim;
        net.dropout_p = dropout_p;
        Xoshiro256StarStar rng(seed);
        const double scale = 1.0 / std::sqrt(static_cast<double>(input_dim));
        net.w1.resize(static_cast<std::size_t>(hidden_dim) * input_dim);
        for (auto& w : net.w1) w = rng.uniform(-scale, scale);
        net.b1.assign(hidden_dim, 0.0);
        net.wf.resize(hidden_dim);
        const double hscale = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
        for (auto& w : net.wf) w = rng.uniform(-hscale, hscale);
        // The noise head starts neutral: zero weights mean no input pattern
        // is born with an inflated variance estimate, so whatever structure
        // V develops is earned from the data. The bias starts
        // pessimistic-but-small, keeping sqrt(V) well away from the sqrt
        // singularity at 0.
        net.wv.assign(hidden_dim, 0.0);
        net.bv = -2.0;
        return net;
    }

    std::size_t parameter_count() const {
        return w1.size() + b1.size() + wf.size() + wv.size() + 2;
    }
};

// The stochastic draws of one MC pass, held explicitly so a loss can be
// re-evaluated under identical noise (finite-difference checks need this).
struct McDraws {
    std::vector<std::vector<std::uint8_t>> keep; // per sample, per hidden unit
    std::vector<double> eps;                     // per sample

    std::size_t samples() const { return eps.size(); }
};

inline McDraws draw_mc(const ToyNet& net, int t_samples, Xoshiro256StarStar& rng) {
    if (t_samples < 1) throw argument_error("draw_mc: need at least one sample");
    McDraws d;
    d.keep.resize(t_samples);
    d.eps.resize(t_samples);
    for (int t = 0; t < t_samples; ++t) {
        auto& mask = d.keep[t];
        mask.assign(net.hidden_dim, 1);
        if (net.dropout_p > 0.0) {
            for (int h = 0; h < net.hidden_dim; ++h) {
                mask[h] = rng.bernoulli(net.dropout_p) ? 0 : 1;
            }
        }
        d.eps[t] = rng.normal_bm();
    }
    return d;
}

struct ForwardSample {
    double y = 0.0; // sigmoid(F + sqrt(V) * eps)
    double v = 0.0; // V = softplus(raw head), the learned noise variance
};

namespace detail {

struct HiddenState {
    std::vector<double> pre;  // w1 x + b1
    std::vector<double> act;  // tanh(pre), before dropout
};

inline HiddenState hidden_forward(const ToyNet& net, const std::vector<double>& patch) {
    if (static_cast<int>(patch.size()) != net.input_dim) {
        throw argument_error("ToyNet: patch length " + std::to_string(patch.size()) +
                             " does not match input_dim " + std::to_string(net.input_dim));
    }
    HiddenState s;
    s.pre.resize(net.hidden_dim);
    s.act.resize(net.hidden_dim);
    for (int h = 0; h < net.hidden_dim; ++h) {
        double acc = net.b1[h];
        const double* row = net.w1.data() + static_cast<std::size_t>(h) * net.input_dim;
        for (int i = 0; i < net.input_dim; ++i) acc += row[i] * patch[i];
        s.pre[h] = acc;
        s.act[h] = std::tanh(acc);
    }
    return s;
}

} // namespace detail

// One dropout pass under explicit draws.
inline ForwardSample forward_with_draws(const ToyNet& net, const std::vector<double>& patch,
                                        const std::vector<std::uint8_t>& keep, double eps) {
    const detail::HiddenState s = detail::hidden_forward(net, patch);
    const double inv_keep = 1.0 / (1.0 - net.dropout_p);
    double f = net.bf;
    double v_raw = net.bv;
    for (int h = 0; h < net.hidden_dim; ++h) {
        if (!keep[h]) continue;
        const double a = s.act[h] * inv_keep;
        f += net.wf[h] * a;
        v_raw += net.wv[h] * a;
    }
    const double v = softplus(v_raw);
    return ForwardSample{sigmoid(f + std::sqrt(v) * eps), v};
}

// One dropout pass drawing fresh noise from rng.
inline ForwardSample forward_sample(const ToyNet& net, const std::vector<double>& patch,
                                    Xoshiro256StarStar& rng) {
    std::vector<std::uint8_t> keep(net.hidden_dim, 1);
    if (net.dropout_p > 0.0) {
        for (int h = 0; h < net.hidden_dim; ++h) {
            keep[h] = rng.bernoulli(net.dropout_p) ? 0 : 1;
        }
    }
    const double eps = rng.normal_bm();
    return forward_with_draws(net, patch, keep, eps);
}

inline constexpr double kProbClamp = 1e-7;

// Weighted BCE of a probability already averaged over MC samples.
inline double weighted_bce(double y_mean, int label, double class_weight) {
    double p = y_mean;
    if (p < kProbClamp) p = kProbClamp;
    if (p > 1.0 - kProbClamp) p = 1.0 - kProbClamp;
    if (label == 1) return -class_weight * std::log(p);
    return -std::log(1.0 - p);
}

struct ToyGrad {
    std::vector<double> w1;
    std::vector<double> b1;
    std::vector<double> wf;
    double bf = 0.0;
    std::vector<double> wv;
    double bv = 0.0;

    static ToyGrad zeros(const ToyNet& net) {
        ToyGrad g;
        g.w1.assign(net.w1.size(), 0.0);
        g.b1.assign(net.b1.size(), 0.0);
        g.wf.assign(net.wf.size(), 0.0);
        g.wv.assign(net.wv.size(), 0.0);
        return g;
    }
};

// Loss under explicit draws; when grad is non-null the analytic gradient is
// accumulated into it (caller zeroes it).
inline double mc_loss_with_draws(const ToyNet& net, const std::vector<double>& patch, int label,
                                 double class_weight, const McDraws& draws,
                                 ToyGrad* grad = nullptr) {
    if (label != 0 && label != 1) throw argument_error("mc_loss: label must be 0 or 1");
    const detail::HiddenState s = detail::hidden_forward(net, patch);
    const double inv_keep = 1.0 / (1.0 - net.dropout_p);
    const int t_count = static_cast<int>(draws.samples());
    if (t_count < 1) throw argument_error("mc_loss: empty draw set");

    // Forward.
    std::vector<double> dropped(static_cast<std::size_t>(t_count) * net.hidden_dim);
    std::vector<double> y(t_count);
    std::vector<double> f(t_count), vr(t_count);
    for (int t = 0; t < t_count; ++t) {
        double ft = net.bf;
        double vt = net.bv;
        const auto& keep = draws.keep[t];
        double* a_row = dropped.data() + static_cast<std::size_t>(t) * net.hidden_dim;
        for (int h = 0; h < net.hidden_dim; ++h) {
            const double a = keep[h] ? s.act[h] * inv_keep : 0.0;
            a_row[h] = a;
            ft += net.wf[h] * a;
            vt += net.wv[h] * a;
        }
        f[t] = ft;
        vr[t] = vt;
        const double v = softplus(vt);
        y[t] = sigmoid(ft + std::sqrt(v) * draws.eps[t]);
    }
    double y_mean = 0.0;
    for (int t = 0; t < t_count; ++t) y_mean += y[t];
    y_mean /= t_count;
    const double loss = weighted_bce(y_mean, label, class_weight);
    if (grad == nullptr) return loss;

    // Backward. dL/dy_mean is zero when the clamp is active (saturated).
    double dl_dmean = 0.0;
    if (y_mean > kProbClamp && y_mean < 1.0 - kProbClamp) {
        dl_dmean = label == 1 ? -class_weight / y_mean : 1.0 / (1.0 - y_mean);
    }
    std::vector<double> dact(net.hidden_dim, 0.0);
    for (int t = 0; t < t_count; ++t) {
        const double dy = dl_dmean / t_count;
        const double dz = dy * y[t] * (1.0 - y[t]); // z = f + sqrt(v)*eps
        const double v = softplus(vr[t]);
        const double sv = std::sqrt(v);
        // d sqrt(softplus(vr)) / d vr = sigmoid(vr) / (2 sqrt(V));
        // as vr -> -inf this tends to 0 like e^{vr/2}, no singularity.
        const double dz_dvr = sv > 0.0 ? draws.eps[t] * sigmoid(vr[t]) / (2.0 * sv) : 0.0;
        const double df = dz;
        const double dvr = dz * dz_dvr;
        const double* a_row = dropped.data() + static_cast<std::size_t>(t) * net.hidden_dim;
        const auto& keep = draws.keep[t];
        grad->bf += df;
        grad->bv += dvr;
        for (int h = 0; h < net.hidden_dim; ++h) {
            const double a = a_row[h];
            grad->wf[h] += df * a;
            grad->wv[h] += dvr * a;
            if (keep[h]) {
                dact[h] += (df * net.wf[h] + dvr * net.wv[h]) * inv_keep;
            }
        }
    }
    for (int h = 0; h < net.hidden_dim; ++h) {
        const double dpre = dact[h] * (1.0 - s.act[h] * s.act[h]); // tanh'
        grad->b1[h] += dpre;
        double* row = grad->w1.data() + static_cast<std::size_t>(h) * net.input_dim;
        for (int i = 0; i < net.input_dim; ++i) row[i] += dpre * patch[i];
    }
    return loss;
}

// Loss with fresh draws; the documented entry point for training code.
inline double mc_loss(const ToyNet& net, const std::vector<double>& patch, int label,
                      int t_samples, double class_weight, Xoshiro256StarStar& rng) {
    const McDraws draws = draw_mc(net, t_samples, rng);
    return mc_loss_with_draws(net, patch, label, class_weight, draws);
}

// A labelled patch grid: cell (x, y) of an n x n arrangement carries one
// flattened patch. Used for both training pairs and prediction layout.
struct ToyDataset {
    int grid_n = 0;
    int patch_dim = 0; // patch edge length; input length is patch_dim^2
    std::vector<std::vector<double>> patches; // row-major over the grid
    std::vector<int> labels;                  // training labels, 0/1 per cell
    std::vector<int> true_labels;             // pre-corruption truth
    std::vector<std::uint8_t> noisy;          // 1 inside the label-noise region

    std::size_t cells() const { return patches.size(); }
};

// Synthetic blob-detection task with an aleatoric-noise region. The left
// half of the grid is clean: positive cells show a bright centred blob on a
// zero background and every label is faithful. The right half is a corrupted
// acquisition: each cell there is truly positive, but its signal is lost --
// the patch is identically zero, indistinguishable from clean background --
// and flip_rate of the recorded labels are corrupted to 0. All ambiguity is
// thereby concentrated on one appearance class: blank patches carry
// conflicting labels (clean background says 0, the corrupted half mostly
// says 1) that no feature can separate, while visible blobs stay clean.
// A noise head trained on this data has to settle on high variance for the
// blank class and low variance for the blobs.
inline ToyDataset make_toy_dataset(int grid_n, int patch_dim, double flip_rate,
                                   std::uint64_t seed) {
    if (grid_n < 2 || patch_dim < 3) {
        throw argument_error("make_toy_dataset: grid_n >= 2 and patch_dim >= 3 required");
    }
    if (!(flip_rate >= 0.0 && flip_rate <= 1.0)) {
        throw argument_error("make_toy_dataset: flip_rate must lie in [0,1]");
    }
    ToyDataset ds;
    ds.grid_n = grid_n;
    ds.patch_dim = patch_dim;
    Xoshiro256StarStar rng(seed);
    const double c = (patch_dim - 1) / 2.0;
    for (int gy = 0; gy < grid_n; ++gy) {
        for (int gx = 0; gx < grid_n; ++gx) {
            const bool noisy_region = gx >= grid_n / 2;
            // Each cell consumes exactly one draw either way, so the stream
            // stays aligned if only flip_rate changes.
            const bool blob = !noisy_region && rng.bernoulli(0.5);
            std::vector<double> patch(static_cast<std::size_t>(patch_dim) * patch_dim);
            for (int py = 0; py < patch_dim; ++py) {
                for (int px = 0; px < patch_dim; ++px) {
                    double val = 0.0;
                    if (blob) {
                        const double dx = px - c;
                        const double dy = py - c;
                        val += std::exp(-(dx * dx + dy * dy) / (0.8 * c * c + 0.25));
                    }
                    patch[static_cast<std::size_t>(py) * patch_dim + px] = val;
                }
            }
            const int truth = noisy_region ? 1 : (blob ? 1 : 0);
            int label = truth;
            if (noisy_region && rng.bernoulli(flip_rate)) label = 1 - label;
            ds.patches.push_back(std::move(patch));
            ds.labels.push_back(label);
            ds.true_labels.push_back(truth);
            ds.noisy.push_back(noisy_region ? 1 : 0);
        }
    }
    return ds;
}

struct TrainConfig {
    int t_train = 10;
    double learning_rate = 0.1;
    int steps = 300;
    double class_weight = 0.0; // 0 selects inverse positive frequency
    std::uint64_t seed = 1;
};

// Plain full-batch gradient descent on the MC loss. Returns the per-step
// mean loss trace.
inline std::vector<double> train(ToyNet& net, const ToyDataset& data, const TrainConfig& cfg) {
    if (cfg.t_train < 1) throw argument_error("train: t_train must be >= 1");
    if (!(cfg.learning_rate > 0.0)) throw argument_error("train: learning_rate must be > 0");
    if (cfg.steps < 0) throw argument_error("train: steps must be >= 0");
    if (data.cells() == 0) throw argument_error("train: empty dataset");

    double class_weight = cfg.class_weight;
    if (class_weight <= 0.0) {
        // Inverse positive frequency, the usual recipe for the class
        // imbalance this loss is weighted against.
        std::size_t pos = 0;
        for (const int l : data.labels) pos += l;
        class_weight = pos == 0
                           ? 1.0
                           : static_cast<double>(data.cells() - pos) / static_cast<double>(pos);
        if (class_weight <= 0.0) class_weight = 1.0;
    }

    Xoshiro256StarStar rng(cfg.seed);
    std::vector<double> trace;
    trace.reserve(cfg.steps);
    const double inv_n = 1.0 / static_cast<double>(data.cells());
    for (int step = 0; step < cfg.steps; ++step) {
        ToyGrad grad = ToyGrad::zeros(net);
        double loss_sum = 0.0;
        for (std::size_t i = 0; i < data.cells(); ++i) {
            const McDraws draws = draw_mc(net, cfg.t_train, rng);
            loss_sum += mc_loss_with_draws(net, data.patches[i], data.labels[i], class_weight,
                                           draws, &grad);
        }
        const double mean_loss = loss_sum * inv_n;
        if (!std::isfinite(mean_loss)) {
            throw training_error("training diverged at step " + std::to_string(step) +
                                 ": non-finite loss");
        }
        const double lr = cfg.learning_rate * inv_n;
        for (std::size_t i = 0; i < net.w1.size(); ++i) net.w1[i] -= lr * grad.w1[i];
        for (std::size_t i = 0; i < net.b1.size(); ++i) net.b1[i] -= lr * grad.b1[i];
        for (std::size_t i = 0; i < net.wf.size(); ++i) net.wf[i] -= lr * grad.wf[i];
        for (std::size_t i = 0; i < net.wv.size(); ++i) net.wv[i] -= lr * grad.wv[i];
        net.bf -= lr * grad.bf;
        net.bv -= lr * grad.bv;
        trace.push_back(mean_loss);
    }
    return trace;
}

// Derive an independent stream for one patch so prediction order (or
// threading) cannot change any draw.
inline Xoshiro256StarStar patch_stream(std::uint64_t seed, std::uint64_t patch_index) {
    return Xoshiro256StarStar(seed ^ ((patch_index + 1) * 0x9e3779b97f4a7c15ULL));
}

// T stochastic passes per cell, assembled into a SampleStack (dims
// grid_n x grid_n x 1) with learned-variance grids attached.
inline SampleStack mc_predict(const ToyNet& net, const ToyDataset& data, int t_samples,
                              std::uint64_t seed) {
    if (t_samples < 1) throw argument_error("mc_predict: t_samples must be >= 1");
    const Dims dims{static_cast<std::uint32_t>(data.grid_n),
                    static_cast<std::uint32_t>(data.grid_n), 1};
    std::vector<std::vector<float>> probs(t_samples,
                                          std::vector<float>(data.cells()));
    std::vector<std::vector<float>> vars(t_samples, std::vector<float>(data.cells()));
    for (std::size_t i = 0; i < data.cells(); ++i) {
        Xoshiro256StarStar rng = patch_stream(seed, i);
        for (int t = 0; t < t_samples; ++t) {
            const ForwardSample out = forward_sample(net, data.patches[i], rng);
            float y = static_cast<float>(out.y);
            if (y < 0.0f) y = 0.0f;
            if (y > 1.0f) y = 1.0f;
            probs[t][i] = y;
            vars[t][i] = static_cast<float>(out.v);
        }
    }
    std::vector<VoxelGrid> pred_grids;
    std::vector<VoxelGrid> var_grids;
    pred_grids.reserve(t_samples);
    var_grids.reserve(t_samples);
    for (int t = 0; t < t_samples; ++t) {
        pred_grids.emplace_back(dims, GridKind::probability, std::move(probs[t]));
        var_grids.emplace_back(dims, GridKind::variance, std::move(vars[t]));
    }
    return SampleStack(std::move(pred_grids), std::move(var_grids));
}

// --- weights serialisation -------------------------------------------------
//
// Layout, little-endian: magic "TNET", u16 version = 1, u16 reserved = 0,
// u32 input_dim, u32 hidden_dim, f64 dropout_p, then the parameter tensors
// as consecutive row-major f64: w1, b1, wf, bf, wv, bv.

inline constexpr char kTnetMagic[4] = {'T', 'N', 'E', 'T'};
inline constexpr std::uint16_t kTnetVersion = 1;

namespace detail {

inline void put_f64(std::string& out, double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

inline double get_f64(const unsigned char* p) {
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return std::bit_cast<double>(bits);
}

} // namespace detail

inline std::string encode_toynet(const ToyNet& net) {
    std::string out;
    out.append(kTnetMagic, 4);
    detail::put_u16(out, kTnetVersion);
    detail::put_u16(out, 0);
    detail::put_u32(out, static_cast<std::uint32_t>(net.input_dim));
    detail::put_u32(out, static_cast<std::uint32_t>(net.hidden_dim));
    detail::put_f64(out, net.dropout_p);
    for (const double w : net.w1) detail::put_f64(out, w);
    for (const double w : net.b1) detail::put_f64(out, w);
    for (const double w : net.wf) detail::put_f64(out, w);
    detail::put_f64(out, net.bf);
    for (const double w : net.wv) detail::put_f64(out, w);
    detail::put_f64(out, net.bv);
    return out;
}

inline ToyNet decode_toynet(const std::string& bytes, const std::string& context = "tnet") {
    constexpr std::size_t header = 4 + 2 + 2 + 4 + 4 + 8;
    if (bytes.size() < header) {
        throw truncation_error(context + ": shorter than the weight-file header");
    }
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    if (std::memcmp(p, kTnetMagic, 4) != 0) {
        throw format_error(context + ": bad magic, expected \"TNET\"");
    }
    const std::uint16_t version = detail::get_u16(p + 4);
    if (version != kTnetVersion) {
        throw format_error(context + ": unsupported version " + std::to_string(version));
    }
    ToyNet net;
    net.input_dim = static_cast<int>(detail::get_u32(p + 8));
    net.hidden_dim = static_cast<int>(detail::get_u32(p + 12));
    if (net.input_dim < 1 || net.hidden_dim < 1) {
        throw format_error(context + ": non-positive dimensions in header");
    }
    net.dropout_p = detail::get_f64(p + 16);
    if (!(net.dropout_p >= 0.0 && net.dropout_p < 1.0)) {
        throw format_error(context + ": dropout_p outside [0,1)");
    }
    const std::size_t n_params = static_cast<std::size_t>(net.input_dim) * net.hidden_dim +
                                 3 * static_cast<std::size_t>(net.hidden_dim) + 2;
    const std::size_t expected = header + 8 * n_params;
    if (bytes.size() != expected) {
        throw truncation_error(context + ": header promises " + std::to_string(expected) +
                               " bytes, file has " + std::to_string(bytes.size()));
    }
    const unsigned char* q = p + header;
    const auto take = [&](std::size_t count, std::vector<double>& out) {
        out.resize(count);
        for (std::size_t i = 0; i < count; ++i, q += 8) out[i] = detail::get_f64(q);
    };
    take(static_cast<std::size_t>(net.input_dim) * net.hidden_dim, net.w1);
    take(net.hidden_dim, net.b1);
    take(net.hidden_dim, net.wf);
    net.bf = detail::get_f64(q);
    q += 8;
    take(net.hidden_dim, net.wv);
    net.bv = detail::get_f64(q);
    for (const double w : net.w1) {
        if (!std::isfinite(w)) throw validation_error(context + ": non-finite weight");
    }
    return net;
}

inline void save_toynet(const ToyNet& net, const std::filesystem::path& path) {
    write_file_bytes_atomic(path, encode_toynet(net));
}

inline ToyNet load_toynet(const std::filesystem::path& path) {
    return decode_toynet(read_file_bytes(path), path.string());
}

} // namespace lesionuq
