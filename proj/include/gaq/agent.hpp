#pragma once

#include <vector>

#include "gaq/matrix.hpp"
#include "gaq/neural.hpp"
#include "gaq/rng.hpp"

namespace gaq {

struct Transition {
    Matrix x;
    Matrix adjacency;
    std::vector<int> actions;
    double reward = 0.0;
    Matrix next_x;
    Matrix next_adjacency;
    bool done = false;
};

/// Fixed-capacity FIFO store: once full, each push evicts the oldest entry.
/// at(0) is always the oldest transition still held.
class ReplayBuffer {
public:
    explicit ReplayBuffer(size_t capacity);

    void push(Transition t);
    size_t size() const { return storage_.size(); }
    size_t capacity() const { return capacity_; }
    const Transition& at(size_t logical) const;

    /// count distinct indices drawn uniformly without replacement.
    std::vector<size_t> sample_indices(size_t count, Rng& rng) const;

private:
    size_t capacity_;
    size_t head_ = 0;  // slot the next push writes to once full
    std::vector<Transition> storage_;
};

struct AgentConfig {
    double discount = 0.99;
    AdamConfig adam;
    int batch_size = 32;
    int buffer_capacity = 10000;
    int target_update_every = 100;  // in train steps; 0 disables updates
    int updates_per_step = 1;       // gradient updates per control step
    double epsilon_start = 1.0;
    double epsilon_end = 0.05;
    int epsilon_decay_episodes = 300;
};

/// Linear schedule over training episodes (0-based), clamped at epsilon_end.
double annealed_epsilon(const AgentConfig& cfg, int train_episode);

/// Greedy per region with lowest-index tie break; each region independently
/// explores with probability epsilon.
std::vector<int> select_actions(const QModel& model, const Matrix& x, const Matrix& adjacency,
                                double epsilon, Rng& rng);

/// One-step targets per region: reward plus the discounted best target-value
/// of the next state, or the bare reward on terminal transitions.
std::vector<std::vector<double>> td_targets(const std::vector<const Transition*>& batch,
                                            const QModel& target, double discount);

/// Samples a batch, regresses the taken actions' values onto their targets
/// (mean squared error over batch x regions) and applies one optimiser
/// update. Returns the batch loss. The target model is left untouched.
/// Throws std::logic_error when the buffer holds fewer than batch_size
/// transitions.
double train_step(QModel& model, const QModel& target, const ReplayBuffer& buffer,
                  AdamState& adam, const AgentConfig& cfg, Rng& rng);

/// Copies the online parameters into the target every `every` train steps.
/// Returns true when a copy happened.
bool maybe_update_target(const QModel& model, QModel& target, long train_steps, int every);

}  // namespace gaq
