#pragma once

#include <functional>
#include <span>

#include "noiselab/dataset.hpp"
#include "noiselab/rng.hpp"

namespace noiselab {

inline constexpr double kProbFloor = 1e-12;

inline double safe_log(double x) { return std::log(std::max(x, kProbFloor)); }

enum class Activation { Relu, LeakyRelu, Sigmoid, Linear };

inline const char* activation_name(Activation a) {
    switch (a) {
        case Activation::Relu: return "relu";
        case Activation::LeakyRelu: return "leaky_relu";
        case Activation::Sigmoid: return "sigmoid";
        case Activation::Linear: return "linear";
    }
    return "?";
}

inline Activation parse_activation(const std::string& s) {
    if (s == "relu") return Activation::Relu;
    if (s == "leaky_relu") return Activation::LeakyRelu;
    if (s == "sigmoid") return Activation::Sigmoid;
    if (s == "linear") return Activation::Linear;
    throw ParseError("unknown activation: " + s);
}

/// How the last layer's activations become class probabilities.
enum class OutputHead {
    Softmax,            // last layer linear, softmax over logits
    NormalizedSigmoid,  // last layer sigmoid, outputs divided by their sum
};

struct Layer {
    Matrix w;  // in x out
    std::vector<double> b;
    Activation act = Activation::Relu;
    double slope = 0.01;  // leaky-relu negative slope

    std::size_t in() const { return w.rows; }
    std::size_t out() const { return w.cols; }
};

struct Network {
    std::vector<Layer> layers;
    OutputHead head = OutputHead::Softmax;

    std::size_t in_dim() const { return layers.front().in(); }
    std::size_t out_dim() const { return layers.back().out(); }

    void validate() const {
        if (layers.empty()) throw ValidationError("network has no layers");
        for (std::size_t l = 0; l + 1 < layers.size(); ++l)
            if (layers[l].out() != layers[l + 1].in())
                throw ValidationError("layer dimensions do not chain at layer " + std::to_string(l));
        const Activation last = layers.back().act;
        if (head == OutputHead::Softmax && last != Activation::Linear)
            throw ValidationError("softmax head requires a linear last layer");
        if (head == OutputHead::NormalizedSigmoid && last != Activation::Sigmoid)
            throw ValidationError("normalized-sigmoid head requires a sigmoid last layer");
        for (const Layer& l : layers)
            if (!l.w.all_finite()) throw ValidationError("network parameters must be finite");
    }
};

struct TrainConfig {
    int epochs = 100;
    int batch_size = 128;
    double learning_rate = 0.01;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    std::uint64_t seed = 1;
    int lr_decay_every = 0;  // 0 disables the step schedule
    double lr_decay_factor = 10.0;

    void validate() const {
        if (epochs < 1 || batch_size < 1) throw ValidationError("epochs and batch_size must be positive");
        if (!(learning_rate > 0.0)) throw ValidationError("learning_rate must be positive");
        if (!(momentum >= 0.0 && momentum < 1.0)) throw ValidationError("momentum must be in [0,1)");
        if (!(weight_decay >= 0.0)) throw ValidationError("weight_decay must be nonnegative");
        if (lr_decay_every < 0 || !(lr_decay_factor > 0.0))
            throw ValidationError("invalid learning-rate schedule");
    }

    double lr_at(int epoch) const {
        if (lr_decay_every <= 0) return learning_rate;
        return learning_rate / std::pow(lr_decay_factor, epoch / lr_decay_every);
    }
};

/// Deterministic fan-in-aware initialization, zero biases.
inline Network init_network(const std::vector<int>& layer_sizes,
                            const std::vector<Activation>& activations, std::uint64_t seed,
                            OutputHead head = OutputHead::Softmax) {
    if (layer_sizes.size() < 2) throw ValidationError("need at least input and output sizes");
    if (activations.size() != layer_sizes.size() - 1)
        throw ValidationError("need one activation per layer");
    for (int s : layer_sizes)
        if (s < 1) throw ValidationError("layer sizes must be positive");
    Network net;
    net.head = head;
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
        Layer layer;
        layer.act = activations[l];
        layer.w = Matrix(layer_sizes[l], layer_sizes[l + 1]);
        layer.b.assign(layer_sizes[l + 1], 0.0);
        const double fan_in = static_cast<double>(layer_sizes[l]);
        const bool rectified = layer.act == Activation::Relu || layer.act == Activation::LeakyRelu;
        const double std = std::sqrt((rectified ? 2.0 : 1.0) / fan_in);
        Rng rng(mix_seed(seed, static_cast<std::uint64_t>(l)));
        for (double& w : layer.w.v) w = rng.normal(0.0, std);
        net.layers.push_back(std::move(layer));
    }
    net.validate();
    return net;
}

// ---------------------------------------------------------------------------
// Dense kernels. Loops are laid out so each output row is owned by a single
// thread; results do not depend on the thread count.

namespace detail {

// Z = X * W + b, X: BxK, W: KxM
inline void affine(const Matrix& x, const Matrix& w, const std::vector<double>& b, Matrix& z) {
    const std::size_t B = x.rows, K = x.cols, M = w.cols;
    z.rows = B;
    z.cols = M;
    z.v.resize(B * M);  // every entry is overwritten below
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t bi = 0; bi < static_cast<std::ptrdiff_t>(B); ++bi) {
        const double* xr = x.row(bi);
        double* zr = z.row(bi);
        for (std::size_t m = 0; m < M; ++m) zr[m] = b[m];
        for (std::size_t k = 0; k < K; ++k) {
            const double a = xr[k];
            const double* wr = w.row(k);
            for (std::size_t m = 0; m < M; ++m) zr[m] += a * wr[m];
        }
    }
}

// dX = dZ * W^T, dZ: BxM, W: KxM
inline void backprop_input(const Matrix& dz, const Matrix& w, Matrix& dx) {
    const std::size_t B = dz.rows, M = dz.cols, K = w.rows;
    dx.rows = B;
    dx.cols = K;
    dx.v.resize(B * K);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t bi = 0; bi < static_cast<std::ptrdiff_t>(B); ++bi) {
        const double* dzr = dz.row(bi);
        double* dxr = dx.row(bi);
        for (std::size_t k = 0; k < K; ++k) {
            const double* wr = w.row(k);
            double acc = 0.0;
            for (std::size_t m = 0; m < M; ++m) acc += dzr[m] * wr[m];
            dxr[k] = acc;
        }
    }
}

// gW = X^T * dZ, gb = colsum(dZ)
inline void grad_params(const Matrix& x, const Matrix& dz, Matrix& gw, std::vector<double>& gb) {
    const std::size_t B = x.rows, K = x.cols, M = dz.cols;
    gw.rows = K;
    gw.cols = M;
    gw.v.assign(K * M, 0.0);
    gb.assign(M, 0.0);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(K); ++k) {
        double* gwr = gw.row(k);
        for (std::size_t bi = 0; bi < B; ++bi) {
            const double a = x.at(bi, k);
            if (a == 0.0) continue;
            const double* dzr = dz.row(bi);
            for (std::size_t m = 0; m < M; ++m) gwr[m] += a * dzr[m];
        }
    }
    for (std::size_t bi = 0; bi < B; ++bi) {
        const double* dzr = dz.row(bi);
        for (std::size_t m = 0; m < M; ++m) gb[m] += dzr[m];
    }
}

inline void apply_activation(Activation act, double slope, Matrix& z) {
    switch (act) {
        case Activation::Linear: return;
        case Activation::Relu:
            for (double& x : z.v)
                if (x < 0.0) x = 0.0;
            return;
        case Activation::LeakyRelu:
            for (double& x : z.v)
                if (x < 0.0) x *= slope;
            return;
        case Activation::Sigmoid:
            for (double& x : z.v) x = 1.0 / (1.0 + std::exp(-x));
            return;
    }
}

// multiplies dA in place by act'(z), recovered from the activation value
inline void activation_backward(Activation act, double slope, const Matrix& a, Matrix& da) {
    switch (act) {
        case Activation::Linear: return;
        case Activation::Relu:
            for (std::size_t i = 0; i < a.v.size(); ++i)
                if (a.v[i] <= 0.0) da.v[i] = 0.0;
            return;
        case Activation::LeakyRelu:
            for (std::size_t i = 0; i < a.v.size(); ++i)
                if (a.v[i] <= 0.0) da.v[i] *= slope;
            return;
        case Activation::Sigmoid:
            for (std::size_t i = 0; i < a.v.size(); ++i) da.v[i] *= a.v[i] * (1.0 - a.v[i]);
            return;
    }
}

inline void apply_head(OutputHead head, const Matrix& a, Matrix& probs) {
    probs.rows = a.rows;
    probs.cols = a.cols;
    probs.v.resize(a.v.size());
    for (std::size_t r = 0; r < a.rows; ++r) {
        const double* in = a.row(r);
        double* out = probs.row(r);
        if (head == OutputHead::Softmax) {
            double mx = in[0];
            for (std::size_t j = 1; j < a.cols; ++j) mx = std::max(mx, in[j]);
            double sum = 0.0;
            for (std::size_t j = 0; j < a.cols; ++j) {
                out[j] = std::exp(in[j] - mx);
                sum += out[j];
            }
            for (std::size_t j = 0; j < a.cols; ++j) out[j] /= sum;
        } else {
            double sum = 0.0;
            for (std::size_t j = 0; j < a.cols; ++j) sum += in[j];
            sum = std::max(sum, kProbFloor);
            for (std::size_t j = 0; j < a.cols; ++j) out[j] = in[j] / sum;
        }
    }
}

// dL/da_last from dL/dprobs
inline void head_backward(OutputHead head, const Matrix& a, const Matrix& probs, const Matrix& g,
                          Matrix& da) {
    da.rows = g.rows;
    da.cols = g.cols;
    da.v.resize(g.v.size());
    for (std::size_t r = 0; r < g.rows; ++r) {
        const double* p = probs.row(r);
        const double* gr = g.row(r);
        double* out = da.row(r);
        double dot = 0.0;
        for (std::size_t j = 0; j < g.cols; ++j) dot += gr[j] * p[j];
        if (head == OutputHead::Softmax) {
            for (std::size_t j = 0; j < g.cols; ++j) out[j] = p[j] * (gr[j] - dot);
        } else {
            const double* in = a.row(r);
            double sum = 0.0;
            for (std::size_t j = 0; j < g.cols; ++j) sum += in[j];
            sum = std::max(sum, kProbFloor);
            for (std::size_t j = 0; j < g.cols; ++j) out[j] = (gr[j] - dot) / sum;
        }
    }
}

}  // namespace detail

/// Per-layer activations kept around for backprop and batch hooks.
struct ForwardWorkspace {
    std::vector<Matrix> acts;  // acts[0] = input batch, acts[L] = last activations
    Matrix probs;

    /// Output of the layer feeding the last layer (the input batch for a
    /// single-layer network).
    const Matrix& representations() const { return acts[acts.size() - 2]; }
};

inline void forward(const Network& net, const Matrix& x, ForwardWorkspace& ws) {
    if (x.cols != net.in_dim()) throw ValidationError("forward: input width mismatch");
    const std::size_t L = net.layers.size();
    ws.acts.resize(L + 1);
    ws.acts[0] = x;
    for (std::size_t l = 0; l < L; ++l) {
        detail::affine(ws.acts[l], net.layers[l].w, net.layers[l].b, ws.acts[l + 1]);
        detail::apply_activation(net.layers[l].act, net.layers[l].slope, ws.acts[l + 1]);
    }
    detail::apply_head(net.head, ws.acts[L], ws.probs);
}

/// Batched forward pass; each output row is a probability vector.
inline Matrix forward(const Network& net, const Matrix& x) {
    ForwardWorkspace ws;
    forward(net, x, ws);
    return std::move(ws.probs);
}

// ---------------------------------------------------------------------------
// Losses are supplied per sample: given the probability row they fill the
// gradient with respect to it and return the loss value.

struct SampleLoss {
    virtual ~SampleLoss() = default;
    virtual double eval(std::size_t sample, std::span<const double> probs,
                        std::span<double> grad) = 0;
};

struct SgdState {
    std::vector<Matrix> vw;
    std::vector<std::vector<double>> vb;

    explicit SgdState(const Network& net) {
        for (const Layer& l : net.layers) {
            vw.emplace_back(l.w.rows, l.w.cols, 0.0);
            vb.emplace_back(l.b.size(), 0.0);
        }
    }
};

/// Reusable buffers for the backward pass; avoids reallocating per batch.
struct TrainScratch {
    ForwardWorkspace ws;
    Matrix g, delta, gw, next_delta;
    std::vector<double> gb;
};

/// One minibatch update with momentum SGD and weight decay. `sample_ids` maps
/// batch rows to dataset indices for the loss. Returns the mean batch loss.
inline double train_step(Network& net, const Matrix& xbatch,
                         std::span<const std::size_t> sample_ids, SampleLoss& loss,
                         const TrainConfig& cfg, double lr, SgdState& state, TrainScratch& scratch) {
    ForwardWorkspace& ws = scratch.ws;
    forward(net, xbatch, ws);
    const std::size_t B = xbatch.rows;
    const std::size_t C = net.out_dim();
    Matrix& g = scratch.g;
    g.rows = B;
    g.cols = C;
    g.v.assign(B * C, 0.0);
    double total = 0.0;
    for (std::size_t r = 0; r < B; ++r) {
        const std::size_t id = sample_ids.empty() ? r : sample_ids[r];
        total += loss.eval(id, std::span<const double>(ws.probs.row(r), C),
                           std::span<double>(g.row(r), C));
    }
    const double mean_loss = total / static_cast<double>(B);
    if (!std::isfinite(mean_loss))
        throw DivergenceError("non-finite batch loss " + format_double(mean_loss));

    const double scale = 1.0 / static_cast<double>(B);
    const std::size_t L = net.layers.size();
    Matrix& delta = scratch.delta;
    Matrix& gw = scratch.gw;
    Matrix& next_delta = scratch.next_delta;
    std::vector<double>& gb = scratch.gb;
    detail::head_backward(net.head, ws.acts[L], ws.probs, g, delta);
    detail::activation_backward(net.layers[L - 1].act, net.layers[L - 1].slope, ws.acts[L], delta);
    for (std::size_t l = L; l-- > 0;) {
        detail::grad_params(ws.acts[l], delta, gw, gb);
        if (l > 0) {
            detail::backprop_input(delta, net.layers[l].w, next_delta);
            detail::activation_backward(net.layers[l - 1].act, net.layers[l - 1].slope, ws.acts[l],
                                        next_delta);
        }
        Layer& layer = net.layers[l];
        Matrix& vw = state.vw[l];
        for (std::size_t i = 0; i < layer.w.v.size(); ++i) {
            const double grad = gw.v[i] * scale + cfg.weight_decay * layer.w.v[i];
            if (!std::isfinite(grad)) throw DivergenceError("non-finite weight gradient");
            vw.v[i] = cfg.momentum * vw.v[i] - lr * grad;
            layer.w.v[i] += vw.v[i];
        }
        std::vector<double>& vb = state.vb[l];
        for (std::size_t i = 0; i < layer.b.size(); ++i) {
            const double grad = gb[i] * scale;
            if (!std::isfinite(grad)) throw DivergenceError("non-finite bias gradient");
            vb[i] = cfg.momentum * vb[i] - lr * grad;
            layer.b[i] += vb[i];
        }
        if (l > 0) std::swap(delta, next_delta);
    }
    return mean_loss;
}

inline double train_step(Network& net, const Matrix& xbatch, SampleLoss& loss,
                         const TrainConfig& cfg, SgdState& state) {
    TrainScratch scratch;
    return train_step(net, xbatch, {}, loss, cfg, cfg.learning_rate, state, scratch);
}

struct TrainHooks {
    // called after the forward pass of every batch, before the update
    std::function<void(const ForwardWorkspace&, std::span<const std::size_t>)> on_batch;
    std::function<void(int epoch, double mean_loss)> on_epoch_end;
};

/// Epoch loop: shuffled minibatches, momentum SGD, optional step-decay
/// schedule. Returns the mean loss per epoch.
inline std::vector<double> run_training(Network& net, const Matrix& x, SampleLoss& loss,
                                        const TrainConfig& cfg, const TrainHooks& hooks = {}) {
    cfg.validate();
    const std::size_t n = x.rows;
    if (n == 0) throw ValidationError("run_training: empty dataset");
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    SgdState state(net);
    TrainScratch scratch;
    Matrix xb;
    std::vector<double> epoch_losses;
    const std::uint64_t shuffle_root = mix_seed(cfg.seed, hash_str("noiselab.shuffle"));
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng rng(mix_seed(shuffle_root, static_cast<std::uint64_t>(epoch)));
        rng.shuffle(order);
        const double lr = cfg.lr_at(epoch);
        double total = 0.0;
        std::size_t seen = 0;
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t bsz = std::min<std::size_t>(cfg.batch_size, n - start);
            xb.rows = bsz;
            xb.cols = x.cols;
            xb.v.resize(bsz * x.cols);
            for (std::size_t r = 0; r < bsz; ++r) {
                const double* src = x.row(order[start + r]);
                std::copy(src, src + x.cols, xb.row(r));
            }
            std::span<const std::size_t> ids(order.data() + start, bsz);
            if (hooks.on_batch) {
                forward(net, xb, scratch.ws);
                hooks.on_batch(scratch.ws, ids);
            }
            total += train_step(net, xb, ids, loss, cfg, lr, state, scratch) *
                     static_cast<double>(bsz);
            seen += bsz;
        }
        const double mean_loss = total / static_cast<double>(seen);
        epoch_losses.push_back(mean_loss);
        if (hooks.on_epoch_end) hooks.on_epoch_end(epoch, mean_loss);
    }
    return epoch_losses;
}

// ---------------------------------------------------------------------------
// Evaluation

enum class LabelKind { Given, True };

/// Class probabilities for every sample, computed in chunks.
inline Matrix predict_probs(const Network& net, const Matrix& x, std::size_t chunk = 512) {
    Matrix probs(x.rows, net.out_dim());
    ForwardWorkspace ws;
    for (std::size_t start = 0; start < x.rows; start += chunk) {
        const std::size_t bsz = std::min(chunk, x.rows - start);
        Matrix xb(bsz, x.cols);
        std::copy(x.row(start), x.row(start) + bsz * x.cols, xb.row(0));
        forward(net, xb, ws);
        std::copy(ws.probs.v.begin(), ws.probs.v.end(), probs.row(start));
    }
    return probs;
}

inline int argmax_row(const double* p, int c) {
    int best = 0;
    for (int j = 1; j < c; ++j)
        if (p[j] > p[best]) best = j;  // ties resolve to the lower index
    return best;
}

/// Fraction of samples whose argmax prediction matches the selected label.
inline double evaluate(const Network& net, const Dataset& ds, LabelKind kind) {
    const std::vector<int>& labels =
        kind == LabelKind::Given ? ds.given_labels() : ds.true_labels();
    const Matrix probs = predict_probs(net, ds.features());
    const int c = static_cast<int>(net.out_dim());
    std::size_t hits = 0;
    for (std::size_t k = 0; k < ds.size(); ++k)
        if (argmax_row(probs.row(k), c) == labels[k]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(ds.size());
}

// ---------------------------------------------------------------------------
// Checkpoints: text format, hex floats, exact round trip.

inline void save_network(const Network& net, const std::string& path) {
    std::string body = "noiselab-network 1\n";
    body += std::string("head ") + (net.head == OutputHead::Softmax ? "softmax" : "normsig") + "\n";
    body += "layers " + std::to_string(net.layers.size()) + "\n";
    char buf[40];
    for (const Layer& l : net.layers) {
        body += "layer " + std::to_string(l.in()) + " " + std::to_string(l.out()) + " " +
                activation_name(l.act) + " " + format_double(l.slope) + "\n";
        for (std::size_t r = 0; r < l.w.rows; ++r) {
            for (std::size_t c = 0; c < l.w.cols; ++c) {
                std::snprintf(buf, sizeof(buf), "%a", l.w.at(r, c));
                body += buf;
                body += c + 1 < l.w.cols ? ' ' : '\n';
            }
        }
        for (std::size_t i = 0; i < l.b.size(); ++i) {
            std::snprintf(buf, sizeof(buf), "%a", l.b[i]);
            body += buf;
            body += i + 1 < l.b.size() ? ' ' : '\n';
        }
    }
    write_text_file(path, body);
}

inline Network load_network(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open checkpoint: " + path);
    std::string magic;
    int version = 0;
    in >> magic >> version;
    if (magic != "noiselab-network" || version != 1)
        throw ParseError("unrecognized checkpoint format: " + path);
    std::string key, head;
    in >> key >> head;
    if (key != "head") throw ParseError("bad checkpoint header");
    Network net;
    net.head = head == "softmax" ? OutputHead::Softmax : OutputHead::NormalizedSigmoid;
    std::size_t nlayers = 0;
    in >> key >> nlayers;
    if (key != "layers") throw ParseError("bad checkpoint header");
    for (std::size_t l = 0; l < nlayers; ++l) {
        std::size_t rows = 0, cols = 0;
        std::string act, slope;
        in >> key >> rows >> cols >> act >> slope;
        if (key != "layer" || !in) throw ParseError("bad layer header");
        Layer layer;
        layer.act = parse_activation(act);
        layer.slope = parse_double(slope);
        layer.w = Matrix(rows, cols);
        layer.b.assign(cols, 0.0);
        std::string tok;
        for (double& wv : layer.w.v) {
            in >> tok;
            wv = parse_double(tok);
        }
        for (double& bv : layer.b) {
            in >> tok;
            bv = parse_double(tok);
        }
        if (!in) throw ParseError("truncated checkpoint: " + path);
        net.layers.push_back(std::move(layer));
    }
    net.validate();
    return net;
}

}  // namespace noiselab
