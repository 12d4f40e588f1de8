#include "advlab/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "advlab/kernels.hpp"
#include "advlab/rng.hpp"

namespace advlab {

void ModelSpec::validate() const {
    if (arch != "logreg" && arch != "mlp2")
        throw ConfigError("model: unknown arch '" + arch +
                          "' (want logreg or mlp2)");
    if (input_dim <= 0)
        throw ConfigError("model: input_dim must be positive, got " +
                          std::to_string(input_dim));
    if (classes < 2)
        throw ConfigError("model: need at least 2 classes, got " +
                          std::to_string(classes));
    if (arch == "mlp2" && hidden <= 0)
        throw ConfigError("model: hidden width must be positive, got " +
                          std::to_string(hidden));
}

void Model::build_layout() {
    spec_.validate();
    std::vector<int64_t> dims;
    if (spec_.arch == "logreg")
        dims = {spec_.input_dim, spec_.classes};
    else
        dims = {spec_.input_dim, spec_.hidden, spec_.hidden, spec_.classes};

    int64_t off = 0;
    for (size_t l = 0; l + 1 < dims.size(); ++l) {
        Layer lay;
        lay.in = dims[l];
        lay.out = dims[l + 1];
        lay.w_off = off;
        off += lay.in * lay.out;
        lay.b_off = off;
        off += lay.out;
        lay.relu_after = (l + 2 < dims.size());
        layers_.push_back(lay);
    }
    w_.assign(static_cast<size_t>(off), 0.0);
}

Model::Model(ModelSpec spec) : spec_(std::move(spec)) { build_layout(); }

Model Model::restore(ModelSpec spec, uint64_t seed, int64_t step) {
    Model m(std::move(spec));
    m.seed_ = seed;
    m.step_ = step;
    return m;
}

Model Model::init(ModelSpec spec, uint64_t seed) {
    Model m(std::move(spec));
    m.seed_ = seed;
    Rng rng(Rng::derive(seed, {stream::kInit}));
    for (const Layer& lay : m.layers_) {
        // Scaled-uniform fan-in: U(-s, s) with s = sqrt(3/in) gives the
        // weights a standard deviation of 1/sqrt(in). Biases start at zero.
        const double s = std::sqrt(3.0 / static_cast<double>(lay.in));
        for (int64_t i = 0; i < lay.in * lay.out; ++i)
            m.w_[static_cast<size_t>(lay.w_off + i)] = rng.uniform(-s, s);
    }
    return m;
}

double Model::weight_norm() const { return kernels::l2_norm(w_); }

NodeId Model::build_forward(Graph& g, const std::string& x_name,
                            const std::string& w_name, int64_t batch) const {
    if (batch <= 0)
        throw ContractError("build_forward: batch must be positive");
    NodeId x = g.input(x_name, {batch, spec_.input_dim});
    NodeId w = g.input(w_name, {weight_count()});
    return build_forward(g, x, w);
}

NodeId Model::build_forward(Graph& g, NodeId x, NodeId w) const {
    NodeId h = x;
    for (const Layer& lay : layers_) {
        NodeId wl = g.slice(w, lay.w_off, {lay.in, lay.out});
        NodeId bl = g.slice(w, lay.b_off, {lay.out});
        h = g.affine(h, wl, bl);
        if (lay.relu_after) h = g.relu(h);
    }
    return h;
}

Tensor Model::forward(const Tensor& x) const { return forward(x, w_); }

Tensor Model::forward(const Tensor& x, std::span<const double> w) const {
    if (static_cast<int64_t>(w.size()) != weight_count())
        throw ShapeError("forward: flat weights have " +
                         std::to_string(w.size()) + " values, model needs " +
                         std::to_string(weight_count()));
    const Shape& xs = x.shape();
    if (xs.size() != 2 || xs[1] != spec_.input_dim)
        throw ShapeError("forward: want x[batch," +
                         std::to_string(spec_.input_dim) + "], got " +
                         shape_str(xs));
    const int64_t batch = xs[0];
    Tensor h = x;
    for (const Layer& lay : layers_) {
        Tensor y({batch, lay.out});
        kernels::affine_forward(h.data().data(), w.data() + lay.w_off,
                                w.data() + lay.b_off, y.data().data(), batch,
                                lay.in, lay.out);
        if (lay.relu_after)
            kernels::relu_forward(y.data().data(), y.data().data(), y.size());
        h = std::move(y);
    }
    return h;
}

void PerturbedView::set_v(std::span<const double> v) {
    if (v.size() != v_.size())
        throw ShapeError("set_v: perturbation has " + std::to_string(v.size()) +
                         " values, weights have " + std::to_string(v_.size()));
    std::memcpy(v_.data(), v.data(), v.size() * 8);
}

void PerturbedView::detach() { std::fill(v_.begin(), v_.end(), 0.0); }

double PerturbedView::perturb_norm() const { return kernels::l2_norm(v_); }

std::vector<double> PerturbedView::materialized() const {
    std::vector<double> out(v_.size());
    kernels::ew_add(base_->weights().data(), v_.data(), out.data(),
                    static_cast<int64_t>(v_.size()));
    return out;
}

Tensor PerturbedView::forward(const Tensor& x) const {
    return base_->forward(x, materialized());
}

// ---------------------------------------------------------------------------
// checkpoints

namespace {

constexpr char kMagic[8] = {'A', 'D', 'V', 'C', 'K', 'P', 'T', '1'};

template <typename T>
void put(std::ofstream& f, T v) {
    f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& f, const std::string& path) {
    T v;
    f.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!f) throw IoError("checkpoint '" + path + "': truncated");
    return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const Model& m) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("checkpoint '" + path + "': cannot open for write");
    f.write(kMagic, 8);
    const std::string& arch = m.spec().arch;
    put<uint32_t>(f, static_cast<uint32_t>(arch.size()));
    f.write(arch.data(), static_cast<std::streamsize>(arch.size()));
    put<int64_t>(f, m.spec().input_dim);
    put<int64_t>(f, m.spec().classes);
    put<int64_t>(f, m.spec().hidden);
    put<uint64_t>(f, m.seed());
    put<int64_t>(f, m.step());
    put<int64_t>(f, m.weight_count());
    f.write(reinterpret_cast<const char*>(m.weights().data()),
            m.weight_count() * 8);
    if (!f) throw IoError("checkpoint '" + path + "': write failed");
}

Model load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("checkpoint '" + path + "': cannot open");
    char magic[8];
    f.read(magic, 8);
    if (!f || std::memcmp(magic, kMagic, 8) != 0)
        throw IoError("checkpoint '" + path + "': bad magic");
    const auto arch_len = get<uint32_t>(f, path);
    if (arch_len > 64)
        throw IoError("checkpoint '" + path + "': arch name too long");
    std::string arch(arch_len, '\0');
    f.read(arch.data(), arch_len);
    if (!f) throw IoError("checkpoint '" + path + "': truncated");

    ModelSpec spec;
    spec.arch = arch;
    spec.input_dim = get<int64_t>(f, path);
    spec.classes = get<int64_t>(f, path);
    spec.hidden = get<int64_t>(f, path);
    const auto seed = get<uint64_t>(f, path);
    const auto step = get<int64_t>(f, path);
    const auto count = get<int64_t>(f, path);

    Model m = Model::restore(spec, seed, step);  // validates the spec
    if (count != m.weight_count())
        throw IoError("checkpoint '" + path + "': weight count " +
                      std::to_string(count) + " does not match architecture (" +
                      std::to_string(m.weight_count()) + ")");
    f.read(reinterpret_cast<char*>(m.weights().data()), count * 8);
    if (!f) throw IoError("checkpoint '" + path + "': truncated weights");
    return m;
}

}  // namespace advlab
