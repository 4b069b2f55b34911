#include "gaq/agent.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace gaq {

ReplayBuffer::ReplayBuffer(size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw std::invalid_argument("replay buffer: capacity must be positive");
    storage_.reserve(capacity);
}

void ReplayBuffer::push(Transition t) {
    if (storage_.size() < capacity_) {
        storage_.push_back(std::move(t));
        return;
    }
    storage_[head_] = std::move(t);
    head_ = (head_ + 1) % capacity_;
}

const Transition& ReplayBuffer::at(size_t logical) const {
    if (logical >= storage_.size()) throw std::out_of_range("replay buffer: index out of range");
    if (storage_.size() < capacity_) return storage_[logical];
    return storage_[(head_ + logical) % capacity_];
}

std::vector<size_t> ReplayBuffer::sample_indices(size_t count, Rng& rng) const {
    if (count > storage_.size())
        throw std::logic_error("replay buffer: cannot sample more than stored");
    std::vector<size_t> idx(storage_.size());
    std::iota(idx.begin(), idx.end(), 0);
    // Partial Fisher-Yates: the first `count` slots end up a uniform draw
    // without replacement.
    for (size_t i = 0; i < count; ++i) {
        const size_t j = i + static_cast<size_t>(rng.uniform_int(
                                 0, static_cast<int>(storage_.size() - 1 - i)));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(count);
    return idx;
}

double annealed_epsilon(const AgentConfig& cfg, int train_episode) {
    if (cfg.epsilon_decay_episodes <= 0) return cfg.epsilon_end;
    const double frac =
        std::min(1.0, static_cast<double>(train_episode) / cfg.epsilon_decay_episodes);
    return cfg.epsilon_start + (cfg.epsilon_end - cfg.epsilon_start) * frac;
}

namespace {

int argmax_row(const Matrix& q, int row) {
    int best = 0;
    for (int a = 1; a < q.cols(); ++a)
        if (q(row, a) > q(row, best)) best = a;  // strict: ties keep the lowest index
    return best;
}

}  // namespace

std::vector<int> select_actions(const QModel& model, const Matrix& x, const Matrix& adjacency,
                                double epsilon, Rng& rng) {
    const Matrix q = model_forward(model, x, adjacency);
    std::vector<int> actions(q.rows());
    for (int i = 0; i < q.rows(); ++i) {
        if (epsilon > 0.0 && rng.uniform01() < epsilon)
            actions[i] = rng.uniform_int(0, q.cols() - 1);
        else
            actions[i] = argmax_row(q, i);
    }
    return actions;
}

std::vector<std::vector<double>> td_targets(const std::vector<const Transition*>& batch,
                                            const QModel& target, double discount) {
    std::vector<std::vector<double>> out;
    out.reserve(batch.size());
    for (const Transition* t : batch) {
        std::vector<double> y(t->x.rows(), t->reward);
        if (!t->done) {
            const Matrix qn = model_forward(target, t->next_x, t->next_adjacency);
            for (int i = 0; i < qn.rows(); ++i)
                y[i] = t->reward + discount * qn(i, argmax_row(qn, i));
        }
        out.push_back(std::move(y));
    }
    return out;
}

double train_step(QModel& model, const QModel& target, const ReplayBuffer& buffer,
                  AdamState& adam, const AgentConfig& cfg, Rng& rng) {
    if (buffer.size() < static_cast<size_t>(cfg.batch_size))
        throw std::logic_error("train_step: buffer holds fewer transitions than batch_size");

    const std::vector<size_t> indices = buffer.sample_indices(cfg.batch_size, rng);
    std::vector<const Transition*> batch;
    batch.reserve(indices.size());
    for (size_t i : indices) batch.push_back(&buffer.at(i));

    const std::vector<std::vector<double>> targets = td_targets(batch, target, cfg.discount);

    // Loss is averaged per transition over its nodes, then over the batch,
    // so transitions on differently sized graphs carry equal weight.
    const double batch_scale = 1.0 / static_cast<double>(batch.size());
    std::vector<Matrix> grads;
    double loss = 0.0;
    for (size_t b = 0; b < batch.size(); ++b) {
        const Transition& t = *batch[b];
        const ModelTrace trace = model_forward_trace(model, t.x, t.adjacency);
        const double node_scale = 1.0 / static_cast<double>(trace.q.rows());
        Matrix upstream(trace.q.rows(), trace.q.cols());
        for (int i = 0; i < trace.q.rows(); ++i) {
            const int a = t.actions.at(i);
            const double diff = trace.q(i, a) - targets[b][i];
            loss += diff * diff * node_scale * batch_scale;
            upstream(i, a) = 2.0 * diff * node_scale * batch_scale;
        }
        std::vector<Matrix> g = model_backward(model, t.adjacency, trace, upstream);
        if (grads.empty()) {
            grads = std::move(g);
        } else {
            for (size_t k = 0; k < grads.size(); ++k) axpy_inplace(grads[k], 1.0, g[k]);
        }
    }

    adam_step(model, grads, adam, cfg.adam);
    return loss;
}

bool maybe_update_target(const QModel& model, QModel& target, long train_steps, int every) {
    if (every <= 0 || train_steps % every != 0) return false;
    target = model;
    return true;
}

}  // namespace gaq
