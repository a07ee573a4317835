#pragma once

// Seeded trainers for the two model families: logistic regression (zero
// init) and a small feed-forward network (Glorot uniform init, ReLU, dropout
// after each hidden layer, sigmoid output). All nondeterminism flows through
// three domain-separated streams derived from the config seed: "init",
// "shuffle" and "dropout". Training is bit-reproducible for a fixed
// (data, config).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "riskstab/cohort.hpp"
#include "riskstab/rng.hpp"
#include "riskstab/types.hpp"

namespace riskstab {

struct TrainingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class ModelKind : std::uint8_t { logistic, mlp };
enum class Optimizer : std::uint8_t { sgd, adam };

struct TrainConfig {
    std::vector<int> hidden = {128, 64, 32};
    double dropout_rate = 0.0;
    int batch_size = 512;
    double learning_rate = 0.01;
    double lr_decay = 1.0;  // multiplicative factor applied per epoch
    double l1 = 0.0;
    double l2 = 0.0;
    int epochs = 5;
    Optimizer optimizer = Optimizer::adam;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;
    std::uint64_t seed = 0;

    void validate() const {
        for (int h : hidden)
            if (h <= 0) throw ConfigError("hidden widths must be positive");
        if (dropout_rate < 0.0 || dropout_rate >= 1.0)
            throw ConfigError("dropout_rate must be in [0,1)");
        if (batch_size <= 0) throw ConfigError("batch_size must be positive");
        if (learning_rate <= 0.0) throw ConfigError("learning_rate must be positive");
        if (lr_decay <= 0.0) throw ConfigError("lr_decay must be positive");
        if (l1 < 0.0 || l2 < 0.0) throw ConfigError("l1/l2 must be non-negative");
        if (epochs <= 0) throw ConfigError("epochs must be positive");
    }
};

// Multi-hot examples: each feature vector is the ascending list of active
// slot indices.
struct Dataset {
    int input_dim = 0;
    std::vector<std::vector<std::uint32_t>> features;
    std::vector<int> labels;

    std::size_t size() const { return features.size(); }
};

inline Dataset make_dataset(const Cohort& cohort, Split split) {
    Dataset ds;
    ds.input_dim = cohort.config.total_slots();
    for (const auto& ex : cohort.examples) {
        if (cohort.patients[ex.patient_index].split != split) continue;
        ds.features.push_back(ex.features);
        ds.labels.push_back(ex.label);
    }
    return ds;
}

// Flat parameter block: for each layer l, a row-major weight matrix
// dims[l] x dims[l+1] followed by dims[l+1] biases.
struct ParamLayout {
    std::vector<int> dims;  // {input, hidden..., 1}
    std::vector<std::size_t> w_off, b_off;
    std::size_t total = 0;

    explicit ParamLayout(std::vector<int> d) : dims(std::move(d)) {
        std::size_t off = 0;
        for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
            w_off.push_back(off);
            off += static_cast<std::size_t>(dims[l]) * dims[l + 1];
            b_off.push_back(off);
            off += dims[l + 1];
        }
        total = off;
    }

    int n_layers() const { return static_cast<int>(dims.size()) - 1; }
    std::size_t w(int l, int i, int j) const {
        return w_off[l] + static_cast<std::size_t>(i) * dims[l + 1] + j;
    }
    std::size_t b(int l, int j) const { return b_off[l] + j; }
};

struct Model {
    ModelKind kind = ModelKind::logistic;
    std::vector<int> dims;
    std::vector<double> params;
    TrainConfig config;
    std::vector<double> epoch_train_loss;
    std::vector<double> epoch_validation_loss;

    ParamLayout layout() const { return ParamLayout(dims); }
};

// Numerically stable binary cross entropy from the logit.
inline double bce_from_logit(double z, int label) {
    // max(z,0) - z*y + log(1 + exp(-|z|))
    return std::max(z, 0.0) - z * label + std::log1p(std::exp(-std::abs(z)));
}

namespace detail {

// Forward pass for one sparse example. `masks` holds one inverted-dropout
// mask per hidden layer (empty when dropout is off); `acts` receives the
// post-activation values of each hidden layer.
inline double forward_logit(const ParamLayout& lay, const std::vector<double>& p,
                            std::span<const std::uint32_t> features,
                            const std::vector<std::vector<double>>& masks,
                            std::vector<std::vector<double>>& acts) {
    const int L = lay.n_layers();
    if (L == 1) {
        double z = p[lay.b(0, 0)];
        for (std::uint32_t s : features) z += p[lay.w(0, s, 0)];
        return z;
    }
    acts.resize(L - 1);
    // First hidden layer reads the sparse input directly.
    {
        const int out = lay.dims[1];
        auto& a = acts[0];
        a.assign(p.begin() + static_cast<std::ptrdiff_t>(lay.b(0, 0)),
                 p.begin() + static_cast<std::ptrdiff_t>(lay.b(0, 0)) + out);
        for (std::uint32_t s : features) {
            const double* row = p.data() + lay.w(0, s, 0);
            for (int j = 0; j < out; ++j) a[j] += row[j];
        }
        for (int j = 0; j < out; ++j) {
            a[j] = std::max(a[j], 0.0);
            if (!masks.empty()) a[j] *= masks[0][j];
        }
    }
    for (int l = 1; l < L - 1; ++l) {
        const int in = lay.dims[l], out = lay.dims[l + 1];
        auto& a = acts[l];
        a.assign(p.begin() + static_cast<std::ptrdiff_t>(lay.b(l, 0)),
                 p.begin() + static_cast<std::ptrdiff_t>(lay.b(l, 0)) + out);
        const auto& prev = acts[l - 1];
        for (int i = 0; i < in; ++i) {
            if (prev[i] == 0.0) continue;
            const double* row = p.data() + lay.w(l, i, 0);
            for (int j = 0; j < out; ++j) a[j] += prev[i] * row[j];
        }
        for (int j = 0; j < out; ++j) {
            a[j] = std::max(a[j], 0.0);
            if (!masks.empty()) a[j] *= masks[l][j];
        }
    }
    // Output layer.
    double z = p[lay.b(L - 1, 0)];
    const auto& last = acts[L - 2];
    for (int i = 0; i < lay.dims[L - 1]; ++i)
        z += last[i] * p[lay.w(L - 1, i, 0)];
    return z;
}

}  // namespace detail

// Mean data loss over a batch plus L1/L2 penalties on weights, with the full
// analytic gradient accumulated into `grad` (which is zeroed first). The
// dropout masks are explicit so finite-difference checks can pin them.
inline double loss_and_gradient(const ParamLayout& lay, const std::vector<double>& p,
                                std::span<const std::vector<std::uint32_t>> features,
                                std::span<const int> labels, double l1, double l2,
                                const std::vector<std::vector<double>>& masks,
                                std::vector<double>& grad) {
    grad.assign(lay.total, 0.0);
    const int L = lay.n_layers();
    const double inv_n = 1.0 / static_cast<double>(features.size());
    double loss = 0.0;

    std::vector<std::vector<double>> acts;
    std::vector<double> delta, delta_prev;
    for (std::size_t e = 0; e < features.size(); ++e) {
        const double z = detail::forward_logit(lay, p, features[e], masks, acts);
        loss += bce_from_logit(z, labels[e]) * inv_n;
        double dz = (sigmoid(z) - labels[e]) * inv_n;

        if (L == 1) {
            grad[lay.b(0, 0)] += dz;
            for (std::uint32_t s : features[e]) grad[lay.w(0, s, 0)] += dz;
            continue;
        }
        // Output layer gradient and backprop into the last hidden layer.
        const auto& last = acts[L - 2];
        delta.assign(lay.dims[L - 1], 0.0);
        grad[lay.b(L - 1, 0)] += dz;
        for (int i = 0; i < lay.dims[L - 1]; ++i) {
            grad[lay.w(L - 1, i, 0)] += dz * last[i];
            delta[i] = dz * p[lay.w(L - 1, i, 0)];
        }
        // Hidden layers, back to front. acts[l] is post ReLU+mask; the
        // derivative through both is mask[j] when the pre-mask ReLU output is
        // positive, which is equivalent to acts[l][j] != 0 given mask >= 0.
        for (int l = L - 2; l >= 1; --l) {
            const int out = lay.dims[l + 1];
            for (int j = 0; j < out; ++j) {
                if (acts[l][j] == 0.0) {
                    delta[j] = 0.0;
                } else if (!masks.empty()) {
                    delta[j] *= masks[l][j];
                }
            }
            const auto& prev = acts[l - 1];
            const int in = lay.dims[l];
            delta_prev.assign(in, 0.0);
            for (int i = 0; i < in; ++i) {
                double* grow = grad.data() + lay.w(l, i, 0);
                const double* prow = p.data() + lay.w(l, i, 0);
                const double a = prev[i];
                double back = 0.0;
                for (int j = 0; j < out; ++j) {
                    grow[j] += delta[j] * a;
                    back += delta[j] * prow[j];
                }
                delta_prev[i] = back;
            }
            for (int j = 0; j < out; ++j) grad[lay.b(l, j)] += delta[j];
            delta.swap(delta_prev);
        }
        // First layer: sparse input.
        {
            const int out = lay.dims[1];
            for (int j = 0; j < out; ++j) {
                if (acts[0][j] == 0.0) {
                    delta[j] = 0.0;
                } else if (!masks.empty()) {
                    delta[j] *= masks[0][j];
                }
                grad[lay.b(0, j)] += delta[j];
            }
            for (std::uint32_t s : features[e]) {
                double* grow = grad.data() + lay.w(0, s, 0);
                for (int j = 0; j < out; ++j) grow[j] += delta[j];
            }
        }
    }

    // Penalties apply to weights only, not biases.
    if (l1 > 0.0 || l2 > 0.0) {
        for (int l = 0; l < L; ++l) {
            const std::size_t begin = lay.w_off[l], end = lay.b_off[l];
            for (std::size_t k = begin; k < end; ++k) {
                const double w = p[k];
                loss += l1 * std::abs(w) + l2 * w * w;
                grad[k] += l1 * (w > 0.0 ? 1.0 : (w < 0.0 ? -1.0 : 0.0)) +
                           2.0 * l2 * w;
            }
        }
    }
    return loss;
}

// Mean BCE of a model over a dataset, dropout off, no penalties.
inline double mean_bce(const ParamLayout& lay, const std::vector<double>& p,
                       const Dataset& ds) {
    static const std::vector<std::vector<double>> no_masks;
    std::vector<std::vector<double>> acts;
    double loss = 0.0;
    for (std::size_t e = 0; e < ds.size(); ++e)
        loss += bce_from_logit(
            detail::forward_logit(lay, p, ds.features[e], no_masks, acts),
            ds.labels[e]);
    return loss / static_cast<double>(ds.size());
}

namespace detail {

inline void check_trainable(const Dataset& train) {
    if (train.size() == 0) throw TrainingError("empty training set");
    const int first = train.labels.front();
    bool mixed = false;
    for (int y : train.labels)
        if (y != first) {
            mixed = true;
            break;
        }
    if (!mixed)
        throw TrainingError("degenerate training data: single class present");
}

inline Model train_impl(ModelKind kind, const Dataset& train,
                        const Dataset& validation, const TrainConfig& config) {
    config.validate();
    check_trainable(train);

    Model model;
    model.kind = kind;
    model.config = config;
    model.dims.push_back(train.input_dim);
    if (kind == ModelKind::mlp)
        for (int h : config.hidden) model.dims.push_back(h);
    model.dims.push_back(1);
    const ParamLayout lay(model.dims);
    model.params.assign(lay.total, 0.0);

    Rng init_rng(derive_seed(config.seed, "init"));
    Rng shuffle_rng(derive_seed(config.seed, "shuffle"));
    Rng dropout_rng(derive_seed(config.seed, "dropout"));

    if (kind == ModelKind::mlp) {
        // Glorot uniform on weights, layer by layer in row-major order.
        for (int l = 0; l < lay.n_layers(); ++l) {
            const double bound =
                std::sqrt(6.0 / (lay.dims[l] + lay.dims[l + 1]));
            for (std::size_t k = lay.w_off[l]; k < lay.b_off[l]; ++k)
                model.params[k] = init_rng.next_uniform(-bound, bound);
        }
    }

    const bool use_dropout = kind == ModelKind::mlp && config.dropout_rate > 0.0;
    const double keep = 1.0 - config.dropout_rate;
    const int n_hidden = lay.n_layers() - 1;

    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);

    std::vector<double> grad(lay.total);
    std::vector<double> adam_m, adam_v;
    if (config.optimizer == Optimizer::adam) {
        adam_m.assign(lay.total, 0.0);
        adam_v.assign(lay.total, 0.0);
    }
    std::int64_t step = 0;

    std::vector<std::vector<std::uint32_t>> batch_features;
    std::vector<int> batch_labels;
    std::vector<std::vector<double>> masks;

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        const double lr = config.learning_rate * std::pow(config.lr_decay, epoch);
        double epoch_loss = 0.0;
        std::size_t n_batches = 0;

        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t stop =
                std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
            batch_features.clear();
            batch_labels.clear();
            for (std::size_t i = start; i < stop; ++i) {
                batch_features.push_back(train.features[order[i]]);
                batch_labels.push_back(train.labels[order[i]]);
            }
            if (use_dropout) {
                masks.resize(n_hidden);
                for (int l = 0; l < n_hidden; ++l) {
                    masks[l].resize(lay.dims[l + 1]);
                    for (double& m : masks[l])
                        m = dropout_rng.next_double() < config.dropout_rate
                                ? 0.0
                                : 1.0 / keep;
                }
            } else {
                masks.clear();
            }
            epoch_loss += loss_and_gradient(lay, model.params, batch_features,
                                            batch_labels, config.l1, config.l2,
                                            masks, grad);
            ++n_batches;
            ++step;

            if (config.optimizer == Optimizer::adam) {
                const double b1 = config.adam_beta1, b2 = config.adam_beta2;
                const double c1 = 1.0 - std::pow(b1, static_cast<double>(step));
                const double c2 = 1.0 - std::pow(b2, static_cast<double>(step));
                for (std::size_t k = 0; k < lay.total; ++k) {
                    adam_m[k] = b1 * adam_m[k] + (1.0 - b1) * grad[k];
                    adam_v[k] = b2 * adam_v[k] + (1.0 - b2) * grad[k] * grad[k];
                    model.params[k] -= lr * (adam_m[k] / c1) /
                                       (std::sqrt(adam_v[k] / c2) + config.adam_epsilon);
                }
            } else {
                for (std::size_t k = 0; k < lay.total; ++k)
                    model.params[k] -= lr * grad[k];
            }
        }
        model.epoch_train_loss.push_back(epoch_loss /
                                         static_cast<double>(n_batches));
        model.epoch_validation_loss.push_back(
            validation.size() ? mean_bce(lay, model.params, validation)
                              : std::numeric_limits<double>::quiet_NaN());
    }
    return model;
}

}  // namespace detail

inline Model train_logistic(const Dataset& train, const Dataset& validation,
                            const TrainConfig& config) {
    return detail::train_impl(ModelKind::logistic, train, validation, config);
}

inline Model train_mlp(const Dataset& train, const Dataset& validation,
                       const TrainConfig& config) {
    return detail::train_impl(ModelKind::mlp, train, validation, config);
}

// Inference: dropout off, pure function of (model, examples).
inline std::vector<double> predict(const Model& model,
                                   std::span<const std::vector<std::uint32_t>> features,
                                   int input_dim) {
    if (input_dim != model.dims.front())
        throw DataError("feature dimension " + std::to_string(input_dim) +
                        " does not match model input " +
                        std::to_string(model.dims.front()));
    const ParamLayout lay(model.dims);
    static const std::vector<std::vector<double>> no_masks;
    std::vector<std::vector<double>> acts;
    std::vector<double> out;
    out.reserve(features.size());
    for (const auto& f : features)
        out.push_back(sigmoid(detail::forward_logit(lay, model.params, f, no_masks, acts)));
    return out;
}

inline std::vector<double> predict(const Model& model, const Dataset& ds) {
    return predict(model, ds.features, ds.input_dim);
}

// ---------------------------------------------------------------------------
// Model file: versioned text header with a config echo, then little-endian
// binary64 weight blocks per layer (weights then biases, layer by layer).

inline void save_model(const Model& model, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << "riskstab-model v1\n";
    out << "kind=" << (model.kind == ModelKind::logistic ? "logistic" : "mlp") << "\n";
    out << "dims=";
    for (std::size_t i = 0; i < model.dims.size(); ++i)
        out << (i ? " " : "") << model.dims[i];
    out << "\n";
    const TrainConfig& c = model.config;
    out << "hidden=";
    for (std::size_t i = 0; i < c.hidden.size(); ++i) out << (i ? " " : "") << c.hidden[i];
    out << "\n";
    out << "dropout_rate=" << format_score(c.dropout_rate) << "\n";
    out << "batch_size=" << c.batch_size << "\n";
    out << "learning_rate=" << format_score(c.learning_rate) << "\n";
    out << "lr_decay=" << format_score(c.lr_decay) << "\n";
    out << "l1=" << format_score(c.l1) << "\n";
    out << "l2=" << format_score(c.l2) << "\n";
    out << "epochs=" << c.epochs << "\n";
    out << "optimizer=" << (c.optimizer == Optimizer::adam ? "adam" : "sgd") << "\n";
    out << "adam_beta1=" << format_score(c.adam_beta1) << "\n";
    out << "adam_beta2=" << format_score(c.adam_beta2) << "\n";
    out << "adam_epsilon=" << format_score(c.adam_epsilon) << "\n";
    out << "seed=" << c.seed << "\n";
    out << "train_loss=";
    for (std::size_t i = 0; i < model.epoch_train_loss.size(); ++i)
        out << (i ? " " : "") << format_score(model.epoch_train_loss[i]);
    out << "\n";
    out << "validation_loss=";
    for (std::size_t i = 0; i < model.epoch_validation_loss.size(); ++i)
        out << (i ? " " : "") << format_score(model.epoch_validation_loss[i]);
    out << "\n";
    out << "weights:\n";
    out.write(reinterpret_cast<const char*>(model.params.data()),
              static_cast<std::streamsize>(model.params.size() * sizeof(double)));
    if (!out) throw DataError("write failed for " + path.string());
}

inline Model load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != "riskstab-model v1")
        throw ParseError(path.string() + ": not a riskstab model file");
    Model model;
    auto parse_ints = [](const std::string& s) {
        std::vector<int> v;
        std::istringstream is(s);
        int x;
        while (is >> x) v.push_back(x);
        return v;
    };
    auto parse_doubles = [](const std::string& s) {
        std::vector<double> v;
        std::istringstream is(s);
        double x;
        while (is >> x) v.push_back(x);
        return v;
    };
    while (std::getline(in, line) && line != "weights:") {
        std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ParseError(path.string() + ": bad header line '" + line + "'");
        std::string key = line.substr(0, eq), value = line.substr(eq + 1);
        if (key == "kind")
            model.kind = value == "mlp" ? ModelKind::mlp : ModelKind::logistic;
        else if (key == "dims")
            model.dims = parse_ints(value);
        else if (key == "hidden")
            model.config.hidden = parse_ints(value);
        else if (key == "dropout_rate")
            model.config.dropout_rate = std::stod(value);
        else if (key == "batch_size")
            model.config.batch_size = std::stoi(value);
        else if (key == "learning_rate")
            model.config.learning_rate = std::stod(value);
        else if (key == "lr_decay")
            model.config.lr_decay = std::stod(value);
        else if (key == "l1")
            model.config.l1 = std::stod(value);
        else if (key == "l2")
            model.config.l2 = std::stod(value);
        else if (key == "epochs")
            model.config.epochs = std::stoi(value);
        else if (key == "optimizer")
            model.config.optimizer = value == "adam" ? Optimizer::adam : Optimizer::sgd;
        else if (key == "adam_beta1")
            model.config.adam_beta1 = std::stod(value);
        else if (key == "adam_beta2")
            model.config.adam_beta2 = std::stod(value);
        else if (key == "adam_epsilon")
            model.config.adam_epsilon = std::stod(value);
        else if (key == "seed")
            model.config.seed = std::stoull(value);
        else if (key == "train_loss")
            model.epoch_train_loss = parse_doubles(value);
        else if (key == "validation_loss")
            model.epoch_validation_loss = parse_doubles(value);
        else
            throw ParseError(path.string() + ": unknown header key '" + key + "'");
    }
    if (model.dims.size() < 2)
        throw ParseError(path.string() + ": missing dims header");
    const ParamLayout lay(model.dims);
    model.params.resize(lay.total);
    in.read(reinterpret_cast<char*>(model.params.data()),
            static_cast<std::streamsize>(lay.total * sizeof(double)));
    if (static_cast<std::size_t>(in.gcount()) != lay.total * sizeof(double))
        throw ParseError(path.string() + ": truncated weight block");
    return model;
}

// key=value training config (same conventions as the cohort config file).
// `hidden` is a space-separated width list.
inline TrainConfig load_train_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    TrainConfig c;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::size_t start = line.find_first_not_of(" \t");
        if (start == std::string::npos) continue;
        if (line[start] == '#' || line[start] == ';' || line[start] == '[') continue;
        std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ParseError(path.string() + ":" + std::to_string(line_no) +
                             ": expected key=value");
        auto trim = [](std::string s) {
            std::size_t a = s.find_first_not_of(" \t");
            std::size_t b = s.find_last_not_of(" \t");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key == "hidden") {
            c.hidden.clear();
            std::istringstream is(value);
            int h;
            while (is >> h) c.hidden.push_back(h);
        } else if (key == "dropout_rate")
            c.dropout_rate = std::stod(value);
        else if (key == "batch_size")
            c.batch_size = std::stoi(value);
        else if (key == "learning_rate")
            c.learning_rate = std::stod(value);
        else if (key == "lr_decay")
            c.lr_decay = std::stod(value);
        else if (key == "l1")
            c.l1 = std::stod(value);
        else if (key == "l2")
            c.l2 = std::stod(value);
        else if (key == "epochs")
            c.epochs = std::stoi(value);
        else if (key == "optimizer") {
            if (value == "adam")
                c.optimizer = Optimizer::adam;
            else if (value == "sgd")
                c.optimizer = Optimizer::sgd;
            else
                throw ConfigError(path.string() + ": unknown optimizer '" + value + "'");
        } else if (key == "adam_beta1")
            c.adam_beta1 = std::stod(value);
        else if (key == "adam_beta2")
            c.adam_beta2 = std::stod(value);
        else if (key == "adam_epsilon")
            c.adam_epsilon = std::stod(value);
        else if (key == "seed")
            c.seed = std::stoull(value);
        else
            throw ConfigError(path.string() + ": unknown key '" + key + "'");
    }
    c.validate();
    return c;
}

}  // namespace riskstab
