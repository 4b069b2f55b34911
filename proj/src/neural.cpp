#include "gaq/neural.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "gaq/detail/json_util.hpp"

namespace gaq {

using detail::json;

Matrix dense_forward(const DenseParams& p, const Matrix& x, Activation act) {
    Matrix out = matmul(x, p.w);
    add_row_vector_inplace(out, p.b);
    if (act == Activation::Relu) out = relu(out);
    return out;
}

GatTrace gat_forward(const GatParams& p, const Matrix& h, const Matrix& adjacency) {
    const int n = h.rows();
    const int dp = p.w.cols();
    if (adjacency.rows() != n || adjacency.cols() != n)
        throw std::invalid_argument("gat_forward: adjacency must be square and match h");
    if (p.attn.rows() != 1 || p.attn.cols() != 2 * dp)
        throw std::invalid_argument("gat_forward: attention vector must be 1 x 2d'");

    GatTrace t;
    t.z = matmul(h, p.w);

    // Split the scoring vector: the logit for edge (i,j) is
    // dot(left, z_i) + dot(right, z_j), so both halves are precombined per
    // node once instead of per edge.
    std::vector<double> left(n, 0.0), right(n, 0.0);
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < dp; ++k) {
            left[i] += p.attn(0, k) * t.z(i, k);
            right[i] += p.attn(0, dp + k) * t.z(i, k);
        }

    t.scores = Matrix(n, n);
    t.alpha = Matrix(n, n);
    for (int i = 0; i < n; ++i) {
        double row_max = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < n; ++j) {
            if (adjacency(i, j) == 0.0) continue;
            const double s = left[i] + right[j];
            t.scores(i, j) = s;
            const double e = s > 0.0 ? s : p.leaky_slope * s;
            row_max = std::max(row_max, e);
        }
        if (row_max == -std::numeric_limits<double>::infinity())
            throw std::invalid_argument("gat_forward: adjacency row " + std::to_string(i) +
                                        " has no neighbours");
        double denom = 0.0;
        for (int j = 0; j < n; ++j) {
            if (adjacency(i, j) == 0.0) continue;
            const double s = t.scores(i, j);
            const double e = s > 0.0 ? s : p.leaky_slope * s;
            t.alpha(i, j) = std::exp(e - row_max);
            denom += t.alpha(i, j);
        }
        for (int j = 0; j < n; ++j)
            if (adjacency(i, j) != 0.0) t.alpha(i, j) /= denom;
    }

    t.out = matmul(t.alpha, t.z);
    add_row_vector_inplace(t.out, p.b);
    return t;
}

QModel QModel::zeros() {
    QModel m;
    const int d = kEmbedDim;
    m.enc1 = {Matrix(kFeatureDim, d), Matrix(1, d)};
    m.enc2 = {Matrix(d, d), Matrix(1, d)};
    m.gat = {Matrix(d, d), Matrix(1, 2 * d), Matrix(1, d), 0.2};
    m.q1 = {Matrix(d, 32), Matrix(1, 32)};
    m.q2 = {Matrix(32, 32), Matrix(1, 32)};
    m.q3 = {Matrix(32, 64), Matrix(1, 64)};
    m.q4 = {Matrix(64, 64), Matrix(1, 64)};
    m.head = {Matrix(64, kActionCount), Matrix(1, kActionCount)};
    return m;
}

namespace {

void fill_glorot(Matrix& w, int fan_in, int fan_out, Rng& rng) {
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    for (int i = 0; i < w.rows(); ++i)
        for (int j = 0; j < w.cols(); ++j) w(i, j) = rng.uniform(-limit, limit);
}

}  // namespace

QModel QModel::glorot_init(Rng& rng) {
    QModel m = zeros();
    fill_glorot(m.enc1.w, m.enc1.w.rows(), m.enc1.w.cols(), rng);
    fill_glorot(m.enc2.w, m.enc2.w.rows(), m.enc2.w.cols(), rng);
    fill_glorot(m.gat.w, m.gat.w.rows(), m.gat.w.cols(), rng);
    fill_glorot(m.gat.attn, m.gat.attn.cols(), 1, rng);
    fill_glorot(m.q1.w, m.q1.w.rows(), m.q1.w.cols(), rng);
    fill_glorot(m.q2.w, m.q2.w.rows(), m.q2.w.cols(), rng);
    fill_glorot(m.q3.w, m.q3.w.rows(), m.q3.w.cols(), rng);
    fill_glorot(m.q4.w, m.q4.w.rows(), m.q4.w.cols(), rng);
    fill_glorot(m.head.w, m.head.w.rows(), m.head.w.cols(), rng);
    return m;
}

std::vector<Matrix*> QModel::param_tensors() {
    return {&enc1.w, &enc1.b, &enc2.w, &enc2.b, &gat.w,  &gat.attn, &gat.b, &q1.w, &q1.b,
            &q2.w,   &q2.b,   &q3.w,   &q3.b,   &q4.w,   &q4.b,     &head.w, &head.b};
}

std::vector<const Matrix*> QModel::param_tensors() const {
    return {&enc1.w, &enc1.b, &enc2.w, &enc2.b, &gat.w,  &gat.attn, &gat.b, &q1.w, &q1.b,
            &q2.w,   &q2.b,   &q3.w,   &q3.b,   &q4.w,   &q4.b,     &head.w, &head.b};
}

const std::vector<std::string>& QModel::param_names() {
    static const std::vector<std::string> names = {
        "enc1.w", "enc1.b", "enc2.w", "enc2.b", "gat.w", "gat.attn", "gat.b",
        "q1.w",   "q1.b",   "q2.w",   "q2.b",   "q3.w",  "q3.b",
        "q4.w",   "q4.b",   "head.w", "head.b"};
    return names;
}

ModelTrace model_forward_trace(const QModel& m, const Matrix& x, const Matrix& adjacency) {
    if (x.cols() != QModel::kFeatureDim)
        throw std::invalid_argument("model_forward: expected " +
                                    std::to_string(QModel::kFeatureDim) + " features per region");
    ModelTrace t;
    t.x = x;
    t.pre1 = matmul(x, m.enc1.w);
    add_row_vector_inplace(t.pre1, m.enc1.b);
    t.h1 = relu(t.pre1);
    t.pre2 = matmul(t.h1, m.enc2.w);
    add_row_vector_inplace(t.pre2, m.enc2.b);
    t.h2 = relu(t.pre2);

    t.gat = gat_forward(m.gat, t.h2, adjacency);

    const DenseParams* trunk[4] = {&m.q1, &m.q2, &m.q3, &m.q4};
    const Matrix* input = &t.gat.out;
    for (int l = 0; l < 4; ++l) {
        t.pre_q[l] = matmul(*input, trunk[l]->w);
        add_row_vector_inplace(t.pre_q[l], trunk[l]->b);
        t.h_q[l] = relu(t.pre_q[l]);
        input = &t.h_q[l];
    }
    t.q = matmul(t.h_q[3], m.head.w);
    add_row_vector_inplace(t.q, m.head.b);
    return t;
}

Matrix model_forward(const QModel& m, const Matrix& x, const Matrix& adjacency) {
    return model_forward_trace(m, x, adjacency).q;
}

std::vector<Matrix> model_backward(const QModel& m, const Matrix& adjacency,
                                   const ModelTrace& t, const Matrix& upstream) {
    check_same_shape(upstream, t.q, "model_backward");
    const int n = t.x.rows();
    const int dp = m.gat.w.cols();

    // Head and trunk.
    Matrix d_head_w = matmul_at_b(t.h_q[3], upstream);
    Matrix d_head_b = column_sums(upstream);
    Matrix d = matmul_a_bt(upstream, m.head.w);

    const DenseParams* trunk[4] = {&m.q1, &m.q2, &m.q3, &m.q4};
    Matrix d_trunk_w[4], d_trunk_b[4];
    for (int l = 3; l >= 0; --l) {
        const Matrix dpre = relu_backward(t.pre_q[l], d);
        const Matrix& input = l == 0 ? t.gat.out : t.h_q[l - 1];
        d_trunk_w[l] = matmul_at_b(input, dpre);
        d_trunk_b[l] = column_sums(dpre);
        d = matmul_a_bt(dpre, trunk[l]->w);
    }

    // Attention layer. d is dLoss/dOut with out = alpha z + b.
    Matrix d_gat_b = column_sums(d);
    Matrix dz = matmul_at_b(t.gat.alpha, d);  // from the aggregation term

    // dAlpha(i,j) = dot(dOut_i, z_j), then softmax rows map dAlpha to
    // dScore. Masked entries never contributed, so they get no gradient.
    Matrix dalpha(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            if (adjacency(i, j) == 0.0) continue;
            double s = 0.0;
            for (int k = 0; k < dp; ++k) s += d(i, k) * t.gat.z(j, k);
            dalpha(i, j) = s;
        }

    Matrix dscore(n, n);
    for (int i = 0; i < n; ++i) {
        double dot = 0.0;
        for (int j = 0; j < n; ++j)
            if (adjacency(i, j) != 0.0) dot += t.gat.alpha(i, j) * dalpha(i, j);
        for (int j = 0; j < n; ++j) {
            if (adjacency(i, j) == 0.0) continue;
            const double de = t.gat.alpha(i, j) * (dalpha(i, j) - dot);
            const double slope = t.gat.scores(i, j) > 0.0 ? 1.0 : m.gat.leaky_slope;
            dscore(i, j) = de * slope;
        }
    }

    // score(i,j) = dot(left, z_i) + dot(right, z_j); fold the edge gradients
    // back onto nodes first.
    std::vector<double> drow(n, 0.0), dcol(n, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            if (adjacency(i, j) == 0.0) continue;
            drow[i] += dscore(i, j);
            dcol[j] += dscore(i, j);
        }

    Matrix d_attn(1, 2 * dp);
    for (int k = 0; k < dp; ++k) {
        double dl = 0.0, dr = 0.0;
        for (int i = 0; i < n; ++i) {
            dl += drow[i] * t.gat.z(i, k);
            dr += dcol[i] * t.gat.z(i, k);
        }
        d_attn(0, k) = dl;
        d_attn(0, dp + k) = dr;
    }
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < dp; ++k)
            dz(i, k) += drow[i] * m.gat.attn(0, k) + dcol[i] * m.gat.attn(0, dp + k);

    Matrix d_gat_w = matmul_at_b(t.h2, dz);
    Matrix dh2 = matmul_a_bt(dz, m.gat.w);

    // Encoder.
    const Matrix dpre2 = relu_backward(t.pre2, dh2);
    Matrix d_enc2_w = matmul_at_b(t.h1, dpre2);
    Matrix d_enc2_b = column_sums(dpre2);
    const Matrix dh1 = matmul_a_bt(dpre2, m.enc2.w);
    const Matrix dpre1 = relu_backward(t.pre1, dh1);
    Matrix d_enc1_w = matmul_at_b(t.x, dpre1);
    Matrix d_enc1_b = column_sums(dpre1);

    std::vector<Matrix> grads;
    grads.reserve(17);
    grads.push_back(std::move(d_enc1_w));
    grads.push_back(std::move(d_enc1_b));
    grads.push_back(std::move(d_enc2_w));
    grads.push_back(std::move(d_enc2_b));
    grads.push_back(std::move(d_gat_w));
    grads.push_back(std::move(d_attn));
    grads.push_back(std::move(d_gat_b));
    for (int l = 0; l < 4; ++l) {
        grads.push_back(std::move(d_trunk_w[l]));
        grads.push_back(std::move(d_trunk_b[l]));
    }
    grads.push_back(std::move(d_head_w));
    grads.push_back(std::move(d_head_b));
    return grads;
}

AdamState AdamState::zeros_like(const QModel& model) {
    AdamState s;
    for (const Matrix* p : model.param_tensors()) {
        s.m.emplace_back(p->rows(), p->cols());
        s.v.emplace_back(p->rows(), p->cols());
    }
    return s;
}

void adam_update(Matrix& theta, const Matrix& grad, Matrix& m, Matrix& v, long step,
                 const AdamConfig& cfg) {
    check_same_shape(theta, grad, "adam_update");
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
    for (int i = 0; i < theta.rows(); ++i)
        for (int j = 0; j < theta.cols(); ++j) {
            const double g = grad(i, j);
            m(i, j) = cfg.beta1 * m(i, j) + (1.0 - cfg.beta1) * g;
            v(i, j) = cfg.beta2 * v(i, j) + (1.0 - cfg.beta2) * g * g;
            const double mhat = m(i, j) / bc1;
            const double vhat = v(i, j) / bc2;
            theta(i, j) -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon);
        }
}

void adam_step(QModel& model, const std::vector<Matrix>& grads, AdamState& state,
               const AdamConfig& cfg) {
    std::vector<Matrix*> params = model.param_tensors();
    if (grads.size() != params.size() || state.m.size() != params.size())
        throw std::invalid_argument("adam_step: tensor count mismatch");
    state.step += 1;
    for (size_t k = 0; k < params.size(); ++k)
        adam_update(*params[k], grads[k], state.m[k], state.v[k], state.step, cfg);
}

namespace {

json tensor_to_json(const Matrix& m) {
    json t;
    t["rows"] = m.rows();
    t["cols"] = m.cols();
    t["data"] = json::array();
    for (int i = 0; i < m.rows(); ++i)
        for (int j = 0; j < m.cols(); ++j) t["data"].push_back(m(i, j));
    return t;
}

void tensor_from_json(const json& t, const std::string& name, Matrix& out) {
    const std::string ctx = "checkpoint tensor \"" + name + "\"";
    if (!t.is_object()) throw std::runtime_error(ctx + ": must be an object");
    detail::reject_unknown_keys(t, {"rows", "cols", "data"}, ctx);
    const int rows = static_cast<int>(detail::get_integer(t, "rows", ctx));
    const int cols = static_cast<int>(detail::get_integer(t, "cols", ctx));
    if (rows != out.rows() || cols != out.cols())
        throw std::runtime_error("checkpoint/architecture mismatch: tensor \"" + name + "\" is " +
                                 std::to_string(rows) + "x" + std::to_string(cols) +
                                 ", expected " + std::to_string(out.rows()) + "x" +
                                 std::to_string(out.cols()));
    const json& data = detail::require_key(t, "data", ctx);
    if (!data.is_array() || data.size() != out.size())
        throw std::runtime_error(ctx + ": wrong element count");
    size_t idx = 0;
    for (int i = 0; i < out.rows(); ++i)
        for (int j = 0; j < out.cols(); ++j) {
            const json& v = data[idx++];
            if (!v.is_number()) throw std::runtime_error(ctx + ": non-numeric element");
            out(i, j) = v.get<double>();
        }
    if (!out.all_finite()) throw std::runtime_error(ctx + ": non-finite element");
}

json tensor_group(const std::vector<const Matrix*>& tensors) {
    json group;
    const auto& names = QModel::param_names();
    for (size_t k = 0; k < tensors.size(); ++k) group[names[k]] = tensor_to_json(*tensors[k]);
    return group;
}

void load_tensor_group(const json& group, const std::string& what, std::vector<Matrix*> tensors) {
    const auto& names = QModel::param_names();
    if (!group.is_object()) throw std::runtime_error("checkpoint: \"" + what + "\" must be an object");
    std::set<std::string> allowed(names.begin(), names.end());
    detail::reject_unknown_keys(group, allowed, "checkpoint " + what);
    for (size_t k = 0; k < names.size(); ++k) {
        auto it = group.find(names[k]);
        if (it == group.end())
            throw std::runtime_error("checkpoint/architecture mismatch: missing tensor \"" +
                                     names[k] + "\" in " + what);
        tensor_from_json(*it, names[k], *tensors[k]);
    }
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const QModel& model,
                     const AdamState& adam) {
    json doc;
    doc["format"] = "gaq-checkpoint";
    doc["version"] = 1;
    doc["tensors"] = tensor_group(model.param_tensors());
    json adam_json;
    adam_json["step"] = adam.step;
    std::vector<const Matrix*> m_ptrs, v_ptrs;
    for (const Matrix& t : adam.m) m_ptrs.push_back(&t);
    for (const Matrix& t : adam.v) v_ptrs.push_back(&t);
    adam_json["m"] = tensor_group(m_ptrs);
    adam_json["v"] = tensor_group(v_ptrs);
    doc["adam"] = std::move(adam_json);

    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path.string());
    out << doc.dump() << "\n";
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw std::runtime_error("checkpoint " + path.string() + ": invalid JSON: " + e.what());
    }
    detail::reject_unknown_keys(doc, {"format", "version", "tensors", "adam"}, "checkpoint");
    if (detail::get_string(doc, "format", "checkpoint") != "gaq-checkpoint")
        throw std::runtime_error("checkpoint: unrecognised format tag");
    if (detail::get_integer(doc, "version", "checkpoint") != 1)
        throw std::runtime_error("checkpoint: unsupported version");

    Checkpoint ck{QModel::zeros(), AdamState::zeros_like(QModel::zeros())};
    load_tensor_group(detail::require_key(doc, "tensors", "checkpoint"), "tensors",
                      ck.model.param_tensors());

    const json& adam = detail::require_key(doc, "adam", "checkpoint");
    detail::reject_unknown_keys(adam, {"step", "m", "v"}, "checkpoint adam");
    ck.adam.step = detail::get_integer(adam, "step", "checkpoint adam");
    if (ck.adam.step < 0) throw std::runtime_error("checkpoint: negative optimiser step");
    std::vector<Matrix*> m_ptrs, v_ptrs;
    for (Matrix& t : ck.adam.m) m_ptrs.push_back(&t);
    for (Matrix& t : ck.adam.v) v_ptrs.push_back(&t);
    load_tensor_group(detail::require_key(adam, "m", "checkpoint adam"), "adam.m", m_ptrs);
    load_tensor_group(detail::require_key(adam, "v", "checkpoint adam"), "adam.v", v_ptrs);
    return ck;
}

}  // namespace gaq
