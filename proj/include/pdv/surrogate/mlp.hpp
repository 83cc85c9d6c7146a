#pragma once

// Dense feed-forward network with per-layer activations, batched over the
// columns of an Eigen matrix, plus Adam.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <sstream>
#include <string>
#include <vector>

#include "pdv/error.hpp"
#include "pdv/kernels/rng.hpp"

namespace pdv {

enum class Activation { relu, tanh, linear };

inline const char* to_string(Activation a) {
    switch (a) {
        case Activation::relu: return "relu";
        case Activation::tanh: return "tanh";
        case Activation::linear: return "linear";
    }
    return "?";
}

inline Activation parse_activation(const std::string& s) {
    if (s == "relu") return Activation::relu;
    if (s == "tanh") return Activation::tanh;
    if (s == "linear") return Activation::linear;
    throw InputError("unknown activation '" + s + "' (expected relu, tanh or linear)");
}

struct LayerSpec {
    int width = 0;
    Activation act = Activation::linear;
    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct MlpSpec {
    int input = 14;
    std::vector<LayerSpec> layers;

    // 14 -> 448 tanh -> 64 tanh -> 224 relu -> 416 tanh -> 128 relu -> 1 linear
    static MlpSpec vix_default() {
        return {14,
                {{448, Activation::tanh},
                 {64, Activation::tanh},
                 {224, Activation::relu},
                 {416, Activation::tanh},
                 {128, Activation::relu},
                 {1, Activation::linear}}};
    }

    // Hidden layers as "448:tanh,64:tanh,..."; the linear output unit is
    // appended.
    static MlpSpec parse_hidden(const std::string& text, int input = 14) {
        MlpSpec s;
        s.input = input;
        std::stringstream ss(text);
        std::string item;
        while (std::getline(ss, item, ',')) {
            const auto colon = item.find(':');
            if (colon == std::string::npos) throw InputError("layer '" + item + "' must read width:activation");
            int w = 0;
            try {
                w = std::stoi(item.substr(0, colon));
            } catch (const std::exception&) {
                throw InputError("layer '" + item + "': bad width");
            }
            s.layers.push_back({w, parse_activation(item.substr(colon + 1))});
        }
        s.layers.push_back({1, Activation::linear});
        s.validate();
        return s;
    }

    std::string hidden_string() const {
        std::string out;
        for (std::size_t i = 0; i + 1 < layers.size(); ++i) {
            if (!out.empty()) out += ",";
            out += std::to_string(layers[i].width) + ":" + to_string(layers[i].act);
        }
        return out;
    }

    void validate() const {
        if (input < 1) throw InputError("network input width must be positive");
        if (layers.empty()) throw InputError("network needs at least one layer");
        for (const auto& l : layers) {
            if (l.width < 1) throw InputError("network layer widths must be positive");
        }
        if (layers.back().width != 1) throw InputError("network output width must be 1");
    }

    std::size_t n_weights() const {
        std::size_t n = 0;
        int prev = input;
        for (const auto& l : layers) {
            n += static_cast<std::size_t>(l.width) * (prev + 1);
            prev = l.width;
        }
        return n;
    }

    friend bool operator==(const MlpSpec&, const MlpSpec&) = default;
};

template <class Scalar>
class Mlp {
public:
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

    struct Gradients {
        std::vector<Matrix> w;
        std::vector<Vector> b;
    };

    // Pre-activations and activations of the last forward_train call.
    struct Workspace {
        std::vector<Matrix> z;
        std::vector<Matrix> a;  // a[0] is the input
    };

    Mlp() = default;

    explicit Mlp(MlpSpec spec) : spec_(std::move(spec)) {
        spec_.validate();
        int prev = spec_.input;
        for (const auto& l : spec_.layers) {
            w_.push_back(Matrix::Zero(l.width, prev));
            b_.push_back(Vector::Zero(l.width));
            prev = l.width;
        }
    }

    // Uniform fan-in scaling: sqrt(6 / fan_in) ahead of relu, sqrt(3 / fan_in)
    // otherwise; biases start at zero.
    void initialize(RngStream stream) {
        for (std::size_t l = 0; l < w_.size(); ++l) {
            const double fan_in = static_cast<double>(w_[l].cols());
            const double limit = std::sqrt((spec_.layers[l].act == Activation::relu ? 6.0 : 3.0) / fan_in);
            for (Eigen::Index j = 0; j < w_[l].cols(); ++j) {
                for (Eigen::Index i = 0; i < w_[l].rows(); ++i) {
                    w_[l](i, j) = static_cast<Scalar>(limit * (2.0 * next_uniform(stream) - 1.0));
                }
            }
            b_[l].setZero();
        }
    }

    const MlpSpec& spec() const { return spec_; }
    std::vector<Matrix>& weights() { return w_; }
    std::vector<Vector>& biases() { return b_; }
    const std::vector<Matrix>& weights() const { return w_; }
    const std::vector<Vector>& biases() const { return b_; }
    std::size_t n_layers() const { return w_.size(); }

    // Columns of x are samples; returns a 1 x n row.
    Matrix forward(const Matrix& x) const {
        Matrix a = x;
        for (std::size_t l = 0; l < w_.size(); ++l) {
            Matrix z = w_[l] * a;
            z.colwise() += b_[l];
            apply(spec_.layers[l].act, z);
            a.swap(z);
        }
        return a;
    }

    const Matrix& forward_train(const Matrix& x, Workspace& ws) const {
        ws.z.resize(w_.size());
        ws.a.resize(w_.size() + 1);
        ws.a[0] = x;
        for (std::size_t l = 0; l < w_.size(); ++l) {
            ws.z[l] = w_[l] * ws.a[l];
            ws.z[l].colwise() += b_[l];
            ws.a[l + 1] = ws.z[l];
            apply(spec_.layers[l].act, ws.a[l + 1]);
        }
        return ws.a.back();
    }

    // Backpropagates dLoss/dOutput (1 x n) through the workspace of the last
    // forward_train call.
    void backward(const Workspace& ws, const Matrix& d_out, Gradients& g) const {
        g.w.resize(w_.size());
        g.b.resize(w_.size());
        Matrix delta = d_out;
        for (std::size_t l = w_.size(); l-- > 0;) {
            multiply_derivative(spec_.layers[l].act, ws.z[l], ws.a[l + 1], delta);
            g.w[l].noalias() = delta * ws.a[l].transpose();
            g.b[l] = delta.rowwise().sum();
            if (l > 0) {
                Matrix next = w_[l].transpose() * delta;
                delta.swap(next);
            }
        }
    }

    bool finite() const {
        for (const auto& w : w_) {
            if (!w.allFinite()) return false;
        }
        for (const auto& b : b_) {
            if (!b.allFinite()) return false;
        }
        return true;
    }

    template <class Other>
    Mlp<Other> cast() const {
        Mlp<Other> out(spec_);
        for (std::size_t l = 0; l < w_.size(); ++l) {
            out.weights()[l] = w_[l].template cast<Other>();
            out.biases()[l] = b_[l].template cast<Other>();
        }
        return out;
    }

private:
    static void apply(Activation act, Matrix& z) {
        switch (act) {
            case Activation::relu: z = z.cwiseMax(Scalar(0)); break;
            case Activation::tanh: z = z.array().tanh().matrix(); break;
            case Activation::linear: break;
        }
    }

    static void multiply_derivative(Activation act, const Matrix& z, const Matrix& a, Matrix& delta) {
        switch (act) {
            case Activation::relu:
                delta = (z.array() > Scalar(0)).select(delta, Scalar(0));
                break;
            case Activation::tanh:
                delta.array() *= (Scalar(1) - a.array().square());
                break;
            case Activation::linear: break;
        }
    }

    MlpSpec spec_;
    std::vector<Matrix> w_;
    std::vector<Vector> b_;
};

// Adam with bias correction.
template <class Scalar>
class Adam {
public:
    using Net = Mlp<Scalar>;

    struct Options {
        double learning_rate = 4.2e-5;
        double beta1 = 0.9;
        double beta2 = 0.999;
        double epsilon = 1e-7;
    };

    Adam() = default;
    Adam(const Net& net, Options opt) : opt_(opt) {
        for (const auto& w : net.weights()) {
            mw_.push_back(Net::Matrix::Zero(w.rows(), w.cols()));
            vw_.push_back(Net::Matrix::Zero(w.rows(), w.cols()));
        }
        for (const auto& b : net.biases()) {
            mb_.push_back(Net::Vector::Zero(b.size()));
            vb_.push_back(Net::Vector::Zero(b.size()));
        }
    }

    void step(Net& net, const typename Net::Gradients& g) {
        ++t_;
        const double c1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
        const auto lr = static_cast<Scalar>(opt_.learning_rate * std::sqrt(c2) / c1);
        const auto b1 = static_cast<Scalar>(opt_.beta1), b2 = static_cast<Scalar>(opt_.beta2);
        const auto eps = static_cast<Scalar>(opt_.epsilon * std::sqrt(c2));
        for (std::size_t l = 0; l < net.n_layers(); ++l) {
            update(net.weights()[l], g.w[l], mw_[l], vw_[l], lr, b1, b2, eps);
            update(net.biases()[l], g.b[l], mb_[l], vb_[l], lr, b1, b2, eps);
        }
    }

    void set_learning_rate(double lr) { opt_.learning_rate = lr; }
    const Options& options() const { return opt_; }

private:
    template <class P, class G>
    static void update(P& p, const G& g, P& m, P& v, Scalar lr, Scalar b1, Scalar b2, Scalar eps) {
        m = b1 * m + (Scalar(1) - b1) * g;
        v = b2 * v + (Scalar(1) - b2) * g.cwiseProduct(g);
        p.array() -= lr * m.array() / (v.array().sqrt() + eps);
    }

    Options opt_;
    std::size_t t_ = 0;
    std::vector<typename Net::Matrix> mw_, vw_;
    std::vector<typename Net::Vector> mb_, vb_;
};

}  // namespace pdv
