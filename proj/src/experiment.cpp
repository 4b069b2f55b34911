#include "gaq/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>

#include "gaq/detail/json_util.hpp"

namespace gaq {

using detail::json;

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

uint64_t episode_seed(uint64_t base_seed, int cell_index, int episode) {
    const uint64_t cell_tag = static_cast<uint64_t>(cell_index) * 0x9e3779b97f4a7c15ULL +
                              static_cast<uint64_t>(episode);
    return detail::mix64(detail::mix64(base_seed ^ 0x45504953ULL) ^ detail::mix64(cell_tag));
}

namespace {

PriorityMode parse_priority(const std::string& s) {
    if (s == "near") return PriorityMode::Near;
    if (s == "far") return PriorityMode::Far;
    throw std::runtime_error("unknown priority mode \"" + s + "\" (expected near or far)");
}

PopularityObjective parse_objective(const std::string& s) {
    if (s == "min") return PopularityObjective::Min;
    if (s == "max") return PopularityObjective::Max;
    throw std::runtime_error("unknown popularity objective \"" + s + "\" (expected min or max)");
}

const char* priority_name(PriorityMode m) { return m == PriorityMode::Near ? "near" : "far"; }
const char* objective_name(PopularityObjective o) {
    return o == PopularityObjective::Min ? "min" : "max";
}

void validate_config(const ExperimentConfig& cfg) {
    if (cfg.episodes < 1) throw std::runtime_error("config: episodes must be at least 1");
    if (cfg.warmup_episodes < 0 || cfg.warmup_episodes > cfg.episodes)
        throw std::runtime_error("config: warmup_episodes must lie in [0, episodes]");
    if (cfg.eval_episodes < 1) throw std::runtime_error("config: eval_episodes must be at least 1");
    if (cfg.agent.batch_size < 1) throw std::runtime_error("config: batch_size must be positive");
    if (cfg.agent.buffer_capacity < cfg.agent.batch_size)
        throw std::runtime_error("config: buffer_capacity must be at least batch_size");
    if (cfg.agent.target_update_every < 0)
        throw std::runtime_error("config: target_update_every must be non-negative");
    if (cfg.agent.updates_per_step < 1)
        throw std::runtime_error("config: updates_per_step must be at least 1");
    if (cfg.agent.discount < 0.0 || cfg.agent.discount > 1.0)
        throw std::runtime_error("config: discount must lie in [0,1]");
    if (cfg.rerouting_ratio < 0.0 || cfg.rerouting_ratio > 1.0)
        throw std::runtime_error("config: rerouting_ratio must lie in [0,1]");
    if (cfg.total_vehicles < 0) throw std::runtime_error("config: total_vehicles must be >= 0");
    if (!(cfg.spawn_window_fraction > 0.0) || cfg.spawn_window_fraction > 1.0)
        throw std::runtime_error("config: spawn_window_fraction must lie in (0,1]");
    for (double r : cfg.test_ratios)
        if (r < 0.0 || r > 1.0) throw std::runtime_error("config: test ratios must lie in [0,1]");
    for (int t : cfg.test_totals)
        if (t < 0) throw std::runtime_error("config: test totals must be >= 0");
    if (cfg.router.k < 1) throw std::runtime_error("config: k must be at least 1");
    if (cfg.router.high_priority_x < 0)
        throw std::runtime_error("config: high_priority_x must be >= 0");
}

}  // namespace

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw std::runtime_error("config " + path.string() + ": invalid JSON: " + e.what());
    }
    if (!doc.is_object()) throw std::runtime_error("config file: top level must be an object");
    detail::reject_unknown_keys(
        doc,
        {"network", "scenario", "episodes", "warmup_episodes", "eval_episodes", "agent", "router",
         "rerouting_ratio", "total_vehicles", "test_ratios", "test_totals",
         "spawn_window_fraction", "post_convergence_episode", "seed", "out_dir",
         "router_diagnostics"},
        "config file");

    ExperimentConfig cfg;
    const std::filesystem::path base = path.parent_path();
    // Input files resolve relative to the config file itself; out_dir stays
    // relative to the working directory.
    cfg.network_path = base / detail::get_string(doc, "network", "config file");
    cfg.scenario_path = base / detail::get_string(doc, "scenario", "config file");

    if (doc.contains("episodes")) cfg.episodes = doc["episodes"].get<int>();
    if (doc.contains("warmup_episodes")) cfg.warmup_episodes = doc["warmup_episodes"].get<int>();
    if (doc.contains("eval_episodes")) cfg.eval_episodes = doc["eval_episodes"].get<int>();

    if (doc.contains("agent")) {
        const json& a = doc["agent"];
        detail::reject_unknown_keys(a,
                                    {"discount", "learning_rate", "batch_size", "buffer_capacity",
                                     "target_update_every", "updates_per_step", "epsilon_start",
                                     "epsilon_end", "epsilon_decay_episodes"},
                                    "config agent");
        if (a.contains("discount")) cfg.agent.discount = a["discount"].get<double>();
        if (a.contains("learning_rate"))
            cfg.agent.adam.learning_rate = a["learning_rate"].get<double>();
        if (a.contains("batch_size")) cfg.agent.batch_size = a["batch_size"].get<int>();
        if (a.contains("buffer_capacity"))
            cfg.agent.buffer_capacity = a["buffer_capacity"].get<int>();
        if (a.contains("target_update_every"))
            cfg.agent.target_update_every = a["target_update_every"].get<int>();
        if (a.contains("updates_per_step"))
            cfg.agent.updates_per_step = a["updates_per_step"].get<int>();
        if (a.contains("epsilon_start")) cfg.agent.epsilon_start = a["epsilon_start"].get<double>();
        if (a.contains("epsilon_end")) cfg.agent.epsilon_end = a["epsilon_end"].get<double>();
        if (a.contains("epsilon_decay_episodes"))
            cfg.agent.epsilon_decay_episodes = a["epsilon_decay_episodes"].get<int>();
    }

    if (doc.contains("router")) {
        const json& r = doc["router"];
        detail::reject_unknown_keys(
            r, {"priority", "high_priority_x", "k", "t1", "t2", "popularity_objective"},
            "config router");
        if (r.contains("priority")) cfg.router.priority = parse_priority(r["priority"]);
        if (r.contains("high_priority_x"))
            cfg.router.high_priority_x = r["high_priority_x"].get<int>();
        if (r.contains("k")) cfg.router.k = r["k"].get<int>();
        if (r.contains("t1")) cfg.router.t1 = r["t1"].get<double>();
        if (r.contains("t2")) cfg.router.t2 = r["t2"].get<double>();
        if (r.contains("popularity_objective"))
            cfg.router.objective = parse_objective(r["popularity_objective"]);
    }

    if (doc.contains("rerouting_ratio")) cfg.rerouting_ratio = doc["rerouting_ratio"].get<double>();
    if (doc.contains("total_vehicles")) cfg.total_vehicles = doc["total_vehicles"].get<int>();
    if (doc.contains("test_ratios"))
        cfg.test_ratios = doc["test_ratios"].get<std::vector<double>>();
    if (doc.contains("test_totals")) cfg.test_totals = doc["test_totals"].get<std::vector<int>>();
    if (doc.contains("spawn_window_fraction"))
        cfg.spawn_window_fraction = doc["spawn_window_fraction"].get<double>();
    if (doc.contains("post_convergence_episode"))
        cfg.post_convergence_episode = doc["post_convergence_episode"].get<int>();
    if (doc.contains("seed")) cfg.seed = doc["seed"].get<uint64_t>();
    if (doc.contains("out_dir")) cfg.out_dir = doc["out_dir"].get<std::string>();
    if (doc.contains("router_diagnostics"))
        cfg.router_diagnostics = doc["router_diagnostics"].get<bool>();

    validate_config(cfg);
    return cfg;
}

void apply_overrides(ExperimentConfig& cfg, const ConfigOverrides& ov) {
    if (ov.seed) cfg.seed = *ov.seed;
    if (ov.out_dir) cfg.out_dir = *ov.out_dir;
    if (ov.priority) cfg.router.priority = *ov.priority;
    if (ov.ratio) {
        cfg.rerouting_ratio = *ov.ratio;
        cfg.test_ratios = {*ov.ratio};
    }
    if (ov.total) {
        cfg.total_vehicles = *ov.total;
        cfg.test_totals = {*ov.total};
    }
    validate_config(cfg);
}

std::vector<Inflow> budgeted_inflows(const std::vector<Inflow>& base, const SimParams& sim,
                                     double ratio, int total, double window_fraction) {
    if (ratio < 0.0 || ratio > 1.0) throw std::runtime_error("rerouting ratio must lie in [0,1]");
    if (total < 0) throw std::runtime_error("total vehicle count must be >= 0");
    if (!(window_fraction > 0.0) || window_fraction > 1.0)
        throw std::runtime_error("spawn window fraction must lie in (0,1]");

    const long rv_target = std::lround(total * ratio);
    const long bv_target = total - rv_target;
    const double window_s = window_fraction * sim.max_control_steps *
                            sim.ticks_per_control_step * sim.tick_seconds;

    std::vector<Inflow> out = base;
    for (VehicleClass cls : {VehicleClass::Rv, VehicleClass::Bv}) {
        const long target = cls == VehicleClass::Rv ? rv_target : bv_target;
        std::vector<size_t> members;
        double rate_sum = 0.0;
        for (size_t i = 0; i < out.size(); ++i) {
            if (out[i].cls != cls) continue;
            members.push_back(i);
            rate_sum += out[i].rate_vph;
        }
        if (target == 0) {
            for (size_t i : members) {
                out[i].budget = 0;
                out[i].rate_vph = 0.0;
            }
            continue;
        }
        if (members.empty() || rate_sum <= 0.0)
            throw std::runtime_error(std::string("cannot place ") + std::to_string(target) + " " +
                                     vehicle_class_name(cls) +
                                     " vehicles: no inflows of that class with positive rate");

        // Largest-remainder split of the class budget across its inflows.
        std::vector<long> share(members.size());
        std::vector<double> remainder(members.size());
        long assigned = 0;
        for (size_t k = 0; k < members.size(); ++k) {
            const double exact = target * out[members[k]].rate_vph / rate_sum;
            share[k] = static_cast<long>(std::floor(exact));
            remainder[k] = exact - share[k];
            assigned += share[k];
        }
        std::vector<size_t> by_remainder(members.size());
        for (size_t k = 0; k < members.size(); ++k) by_remainder[k] = k;
        std::stable_sort(by_remainder.begin(), by_remainder.end(),
                         [&](size_t a, size_t b) { return remainder[a] > remainder[b]; });
        for (long extra = target - assigned; extra > 0; --extra)
            share[by_remainder[(target - assigned) - extra]] += 1;

        // Scale rates so the expected number of spawns inside the window
        // matches the budget; the budget itself stays the hard cap.
        const double expected = rate_sum * window_s / 3600.0;
        const double kappa = target / expected;
        for (size_t k = 0; k < members.size(); ++k) {
            out[members[k]].budget = share[k];
            out[members[k]].rate_vph *= kappa;
        }
    }
    return out;
}

namespace {

enum class Policy { Random, Greedy, EpsGreedy, Baseline };

struct Trainer {
    QModel* model = nullptr;
    QModel* target = nullptr;
    ReplayBuffer* buffer = nullptr;
    AdamState* adam = nullptr;
    long train_steps = 0;
    Rng* act_rng = nullptr;
    Rng* train_rng = nullptr;
    const AgentConfig* agent = nullptr;
    bool store = false;
    bool train = false;
};

struct EpisodeOutcome {
    double total_reward = 0.0;
    int steps = 0;
    bool hit_cap = false;
    double mean_rv_speed = 0.0;
    std::optional<double> mean_loss;
};

EpisodeOutcome drive_episode(TrafficEnv& env, uint64_t seed, Policy policy, double epsilon,
                             Trainer& tr) {
    env.reset(seed);
    Matrix x = env.observe();
    const Matrix& adj = env.adjacency();

    EpisodeOutcome out;
    double speed_weighted = 0.0;
    long rv_samples = 0;
    double loss_sum = 0.0;
    int loss_count = 0;

    while (true) {
        std::vector<int> actions;
        TrafficEnv::StepResult res;
        if (policy == Policy::Baseline) {
            res = env.step_baseline();
        } else {
            if (policy == Policy::Random) {
                actions.resize(env.region_count());
                for (int& a : actions) a = tr.act_rng->uniform_int(0, QModel::kActionCount - 1);
            } else {
                const double e = policy == Policy::Greedy ? 0.0 : epsilon;
                actions = select_actions(*tr.model, x, adj, e, *tr.act_rng);
            }
            res = env.step(actions);
        }

        out.total_reward += res.reward.reward;
        speed_weighted += res.reward.mean_rv_speed * res.reward.rv_count;
        rv_samples += res.reward.rv_count;

        Matrix next_x = env.observe();
        if (tr.store && policy != Policy::Baseline)
            tr.buffer->push(
                Transition{x, adj, actions, res.reward.reward, next_x, adj, res.done});
        x = std::move(next_x);

        if (tr.train && tr.buffer->size() >= static_cast<size_t>(tr.agent->batch_size)) {
            for (int u = 0; u < tr.agent->updates_per_step; ++u) {
                loss_sum += train_step(*tr.model, *tr.target, *tr.buffer, *tr.adam, *tr.agent,
                                       *tr.train_rng);
                ++loss_count;
                tr.train_steps += 1;
                maybe_update_target(*tr.model, *tr.target, tr.train_steps,
                                    tr.agent->target_update_every);
            }
        }

        if (res.done || res.at_cap) {
            out.steps = res.step_index;
            out.hit_cap = res.at_cap;
            break;
        }
    }

    out.mean_rv_speed = rv_samples > 0 ? speed_weighted / rv_samples : 0.0;
    if (loss_count > 0) out.mean_loss = loss_sum / loss_count;
    return out;
}

struct World {
    NetworkFile netfile;
    FogPartition partition;
    ScenarioConfig scenario;
};

World load_world(const ExperimentConfig& cfg) {
    NetworkFile nf = load_network_file(cfg.network_path);
    if (!nf.partition)
        throw std::runtime_error(cfg.network_path.string() +
                                 ": fog_regions are required for experiment runs");
    FogPartition partition = *nf.partition;
    ScenarioConfig scenario = load_scenario_file(cfg.scenario_path);
    return World{std::move(nf), std::move(partition), std::move(scenario)};
}

constexpr int kRollingWindow = 50;

/// Computes per-cell aggregates and the rolling cap series. `bounds` holds
/// the first episode-row index of each cell plus a trailing end marker.
void finalize_summary(MetricsSummary& s, std::vector<CellSummary> cells,
                      const std::vector<int>& bounds) {
    s.rolling_cap_probability.assign(s.episodes.size(), 0.0);
    for (size_t c = 0; c < cells.size(); ++c) {
        const int begin = bounds[c];
        const int end = bounds[c + 1];
        CellSummary& cell = cells[c];
        cell.episodes = end - begin;
        double reward_sum = 0.0, speed_sum = 0.0;
        double post_sum = 0.0;
        int post_count = 0, caps = 0;
        int caps_in_window = 0;
        for (int i = begin; i < end; ++i) {
            const EpisodeRow& row = s.episodes[i];
            reward_sum += row.reward;
            speed_sum += row.mean_rv_speed;
            caps += row.hit_cap ? 1 : 0;
            if (row.episode >= s.post_convergence_from) {
                post_sum += row.reward;
                ++post_count;
            }
            caps_in_window += row.hit_cap ? 1 : 0;
            if (i - begin >= kRollingWindow)
                caps_in_window -= s.episodes[i - kRollingWindow].hit_cap ? 1 : 0;
            const int window = std::min(i - begin + 1, kRollingWindow);
            s.rolling_cap_probability[i] = static_cast<double>(caps_in_window) / window;
        }
        if (cell.episodes > 0) {
            cell.mean_reward = reward_sum / cell.episodes;
            cell.mean_rv_speed = speed_sum / cell.episodes;
            cell.cap_probability = static_cast<double>(caps) / cell.episodes;
        }
        cell.post_conv_mean_reward = post_count > 0 ? post_sum / post_count : cell.mean_reward;
    }
    s.cells = std::move(cells);
}

void write_config_echo(const std::filesystem::path& path, const ExperimentConfig& cfg,
                       uint64_t resolved_seed, const std::string& mode) {
    json doc;
    doc["mode"] = mode;
    doc["network"] = cfg.network_path.string();
    doc["scenario"] = cfg.scenario_path.string();
    doc["episodes"] = cfg.episodes;
    doc["warmup_episodes"] = cfg.warmup_episodes;
    doc["eval_episodes"] = cfg.eval_episodes;
    doc["agent"] = {{"discount", cfg.agent.discount},
                    {"learning_rate", cfg.agent.adam.learning_rate},
                    {"batch_size", cfg.agent.batch_size},
                    {"buffer_capacity", cfg.agent.buffer_capacity},
                    {"target_update_every", cfg.agent.target_update_every},
                    {"updates_per_step", cfg.agent.updates_per_step},
                    {"epsilon_start", cfg.agent.epsilon_start},
                    {"epsilon_end", cfg.agent.epsilon_end},
                    {"epsilon_decay_episodes", cfg.agent.epsilon_decay_episodes}};
    doc["router"] = {{"priority", priority_name(cfg.router.priority)},
                     {"high_priority_x", cfg.router.high_priority_x},
                     {"k", cfg.router.k},
                     {"t1", cfg.router.t1},
                     {"t2", cfg.router.t2},
                     {"popularity_objective", objective_name(cfg.router.objective)}};
    doc["rerouting_ratio"] = cfg.rerouting_ratio;
    doc["total_vehicles"] = cfg.total_vehicles;
    doc["test_ratios"] = cfg.test_ratios;
    doc["test_totals"] = cfg.test_totals;
    doc["spawn_window_fraction"] = cfg.spawn_window_fraction;
    doc["post_convergence_episode"] = cfg.post_convergence_episode;
    doc["seed"] = resolved_seed;
    doc["out_dir"] = cfg.out_dir.string();
    doc["router_diagnostics"] = cfg.router_diagnostics;

    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << doc.dump(2) << "\n";
}

void write_diagnostics_csv(const std::filesystem::path& path,
                           const std::vector<std::pair<int, RouteDiagnostic>>& rows) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "episode,control_step,vehicle,priority_rank,high_priority,candidates,weight,"
           "popularity\n";
    for (const auto& [episode, d] : rows) {
        out << episode << ',' << d.control_step << ',' << d.vehicle << ',' << d.priority_rank
            << ',' << (d.high_priority ? 1 : 0) << ',' << d.candidate_count << ','
            << format_double(d.weight) << ',' << format_double(d.popularity) << "\n";
    }
}

void write_timings_csv(const std::filesystem::path& path, double wall_seconds, int episodes) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "metric,value\n";
    out << "wall_seconds," << format_double(wall_seconds) << "\n";
    out << "episodes," << episodes << "\n";
}

struct RunArtifacts {
    const QModel* model = nullptr;  // written as checkpoint.json when set
    const AdamState* adam = nullptr;
    std::vector<std::pair<int, RouteDiagnostic>> diagnostics;
    double wall_seconds = 0.0;
};

void write_run_outputs(const ExperimentConfig& cfg, const MetricsSummary& summary,
                       uint64_t resolved_seed, const RunArtifacts& artifacts) {
    namespace fs = std::filesystem;
    fs::create_directories(cfg.out_dir);
    write_episode_csv(cfg.out_dir / "episodes.csv", summary.episodes);
    write_summary_csv(cfg.out_dir / "summary.csv", summary);
    write_summary_json(cfg.out_dir / "summary.json", summary);
    write_config_echo(cfg.out_dir / "config_echo.json", cfg, resolved_seed, summary.mode);
    // Wall time lives apart from the data files, which must stay identical
    // across reruns of the same seed.
    write_timings_csv(cfg.out_dir / "timings.csv", artifacts.wall_seconds,
                      static_cast<int>(summary.episodes.size()));
    if (artifacts.model) save_checkpoint(cfg.out_dir / "checkpoint.json", *artifacts.model,
                                         *artifacts.adam);
    if (cfg.router_diagnostics)
        write_diagnostics_csv(cfg.out_dir / "router_diagnostics.csv", artifacts.diagnostics);
}

void collect_diagnostics(const ExperimentConfig& cfg, const TrafficEnv& env, int episode,
                         RunArtifacts& artifacts) {
    if (!cfg.router_diagnostics) return;
    for (const RouteDiagnostic& d : env.diagnostics()) artifacts.diagnostics.emplace_back(episode, d);
}

}  // namespace

MetricsSummary run_training(const ExperimentConfig& cfg, std::ostream& log) {
    validate_config(cfg);
    const auto t0 = std::chrono::steady_clock::now();
    World world = load_world(cfg);
    const uint64_t base_seed = cfg.seed ? *cfg.seed : world.scenario.seed;

    ScenarioConfig scenario = world.scenario;
    scenario.inflows = budgeted_inflows(world.scenario.inflows, scenario.sim, cfg.rerouting_ratio,
                                        cfg.total_vehicles, cfg.spawn_window_fraction);
    TrafficEnv env(world.netfile.network, world.partition, scenario, cfg.router);

    Rng root(base_seed);
    Rng init_rng = root.fork(1);
    Rng act_rng = root.fork(2);
    Rng train_rng = root.fork(3);

    QModel model = QModel::glorot_init(init_rng);
    QModel target = model;
    ReplayBuffer buffer(cfg.agent.buffer_capacity);
    AdamState adam = AdamState::zeros_like(model);
    Trainer tr;
    tr.model = &model;
    tr.target = &target;
    tr.buffer = &buffer;
    tr.adam = &adam;
    tr.act_rng = &act_rng;
    tr.train_rng = &train_rng;
    tr.agent = &cfg.agent;
    tr.store = true;

    MetricsSummary summary;
    summary.mode = "train";
    summary.seed = base_seed;
    summary.post_convergence_from =
        cfg.post_convergence_episode >= 0
            ? cfg.post_convergence_episode
            : cfg.warmup_episodes + (cfg.episodes - cfg.warmup_episodes) / 2;

    RunArtifacts artifacts;
    for (int ep = 0; ep < cfg.episodes; ++ep) {
        const bool warm = ep < cfg.warmup_episodes;
        tr.train = !warm;
        const double eps =
            warm ? 1.0 : annealed_epsilon(cfg.agent, ep - cfg.warmup_episodes);
        const EpisodeOutcome oc = drive_episode(env, episode_seed(base_seed, 0, ep),
                                                warm ? Policy::Random : Policy::EpsGreedy, eps, tr);
        summary.episodes.push_back(EpisodeRow{ep, warm ? "warmup" : "train", oc.total_reward,
                                              oc.steps, oc.hit_cap, oc.mean_rv_speed, oc.mean_loss,
                                              eps});
        collect_diagnostics(cfg, env, ep, artifacts);
        if ((ep + 1) % 50 == 0)
            log << "episode " << (ep + 1) << "/" << cfg.episodes
                << " reward=" << format_double(oc.total_reward) << "\n";
    }

    finalize_summary(summary,
                     {CellSummary{cfg.rerouting_ratio, cfg.total_vehicles, 0, 0, 0, 0, 0}},
                     {0, cfg.episodes});

    artifacts.model = &model;
    artifacts.adam = &adam;
    artifacts.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_run_outputs(cfg, summary, base_seed, artifacts);
    log << "training done: post-convergence mean reward "
        << format_double(summary.cells[0].post_conv_mean_reward) << "\n";
    return summary;
}

namespace {

MetricsSummary run_fixed_policy(const ExperimentConfig& cfg, std::ostream& log, Policy policy,
                                const std::string& mode) {
    validate_config(cfg);
    const auto t0 = std::chrono::steady_clock::now();
    World world = load_world(cfg);
    const uint64_t base_seed = cfg.seed ? *cfg.seed : world.scenario.seed;

    ScenarioConfig scenario = world.scenario;
    scenario.inflows = budgeted_inflows(world.scenario.inflows, scenario.sim, cfg.rerouting_ratio,
                                        cfg.total_vehicles, cfg.spawn_window_fraction);
    TrafficEnv env(world.netfile.network, world.partition, scenario, cfg.router);

    Rng root(base_seed);
    Rng act_rng = root.fork(2);
    Trainer tr;
    tr.act_rng = &act_rng;

    MetricsSummary summary;
    summary.mode = mode;
    summary.seed = base_seed;
    summary.post_convergence_from = 0;

    RunArtifacts artifacts;
    for (int ep = 0; ep < cfg.episodes; ++ep) {
        const EpisodeOutcome oc = drive_episode(env, episode_seed(base_seed, 0, ep), policy, 1.0, tr);
        EpisodeRow row{ep,        mode,           oc.total_reward, oc.steps,
                       oc.hit_cap, oc.mean_rv_speed, std::nullopt,   std::nullopt};
        if (policy == Policy::Random) row.epsilon = 1.0;
        summary.episodes.push_back(std::move(row));
        collect_diagnostics(cfg, env, ep, artifacts);
    }

    finalize_summary(summary,
                     {CellSummary{cfg.rerouting_ratio, cfg.total_vehicles, 0, 0, 0, 0, 0}},
                     {0, cfg.episodes});
    artifacts.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_run_outputs(cfg, summary, base_seed, artifacts);
    log << mode << " done: mean reward " << format_double(summary.cells[0].mean_reward) << "\n";
    return summary;
}

}  // namespace

MetricsSummary run_baseline(const ExperimentConfig& cfg, std::ostream& log) {
    return run_fixed_policy(cfg, log, Policy::Baseline, "baseline");
}

MetricsSummary run_random(const ExperimentConfig& cfg, std::ostream& log) {
    return run_fixed_policy(cfg, log, Policy::Random, "random");
}

MetricsSummary run_test(const ExperimentConfig& cfg, const std::filesystem::path& checkpoint,
                        std::ostream& log) {
    validate_config(cfg);
    const auto t0 = std::chrono::steady_clock::now();
    World world = load_world(cfg);
    const uint64_t base_seed = cfg.seed ? *cfg.seed : world.scenario.seed;

    Checkpoint ck = load_checkpoint(checkpoint);

    const std::vector<double> ratios =
        cfg.test_ratios.empty() ? std::vector<double>{cfg.rerouting_ratio} : cfg.test_ratios;
    const std::vector<int> totals =
        cfg.test_totals.empty() ? std::vector<int>{cfg.total_vehicles} : cfg.test_totals;

    Rng root(base_seed);
    Rng act_rng = root.fork(2);  // unused by greedy selection, still supplied
    Trainer tr;
    tr.model = &ck.model;
    tr.act_rng = &act_rng;

    MetricsSummary summary;
    summary.mode = "test";
    summary.seed = base_seed;
    summary.post_convergence_from = 0;

    RunArtifacts artifacts;
    std::vector<CellSummary> cells;
    std::vector<int> bounds{0};
    int cell_index = 0;
    int row_index = 0;
    for (double ratio : ratios) {
        for (int total : totals) {
            ScenarioConfig scenario = world.scenario;
            scenario.inflows = budgeted_inflows(world.scenario.inflows, scenario.sim, ratio, total,
                                                cfg.spawn_window_fraction);
            TrafficEnv env(world.netfile.network, world.partition, scenario, cfg.router);
            for (int ep = 0; ep < cfg.eval_episodes; ++ep) {
                const EpisodeOutcome oc = drive_episode(
                    env, episode_seed(base_seed, cell_index + 1, ep), Policy::Greedy, 0.0, tr);
                summary.episodes.push_back(EpisodeRow{row_index++, "eval", oc.total_reward,
                                                      oc.steps, oc.hit_cap, oc.mean_rv_speed,
                                                      std::nullopt, 0.0});
                collect_diagnostics(cfg, env, row_index - 1, artifacts);
            }
            cells.push_back(CellSummary{ratio, total, 0, 0, 0, 0, 0});
            bounds.push_back(row_index);
            ++cell_index;
            log << "evaluated ratio=" << format_double(ratio) << " total=" << total << "\n";
        }
    }

    finalize_summary(summary, std::move(cells), bounds);
    artifacts.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_run_outputs(cfg, summary, base_seed, artifacts);
    return summary;
}

void write_episode_csv(const std::filesystem::path& path, const std::vector<EpisodeRow>& rows) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "episode,mode,reward,steps,hit_cap,mean_rv_speed,mean_loss,epsilon\n";
    for (const EpisodeRow& r : rows) {
        out << r.episode << ',' << r.mode << ',' << format_double(r.reward) << ',' << r.steps
            << ',' << (r.hit_cap ? 1 : 0) << ',' << format_double(r.mean_rv_speed) << ',';
        if (r.mean_loss) out << format_double(*r.mean_loss);
        out << ',';
        if (r.epsilon) out << format_double(*r.epsilon);
        out << "\n";
    }
}

void write_summary_csv(const std::filesystem::path& path, const MetricsSummary& summary) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "ratio,total,episodes,mean_reward,post_conv_mean_reward,mean_rv_speed,"
           "cap_probability\n";
    for (const CellSummary& c : summary.cells) {
        out << format_double(c.ratio) << ',' << c.total << ',' << c.episodes << ','
            << format_double(c.mean_reward) << ',' << format_double(c.post_conv_mean_reward) << ','
            << format_double(c.mean_rv_speed) << ',' << format_double(c.cap_probability) << "\n";
    }
}

namespace {

json cell_to_json(const CellSummary& c) {
    return {{"ratio", c.ratio},
            {"total", c.total},
            {"episodes", c.episodes},
            {"mean_reward", c.mean_reward},
            {"post_conv_mean_reward", c.post_conv_mean_reward},
            {"mean_rv_speed", c.mean_rv_speed},
            {"cap_probability", c.cap_probability}};
}

CellSummary cell_from_json(const json& j) {
    CellSummary c;
    c.ratio = detail::get_number(j, "ratio", "summary cell");
    c.total = static_cast<int>(detail::get_integer(j, "total", "summary cell"));
    c.episodes = static_cast<int>(detail::get_integer(j, "episodes", "summary cell"));
    c.mean_reward = detail::get_number(j, "mean_reward", "summary cell");
    c.post_conv_mean_reward = detail::get_number(j, "post_conv_mean_reward", "summary cell");
    c.mean_rv_speed = detail::get_number(j, "mean_rv_speed", "summary cell");
    c.cap_probability = detail::get_number(j, "cap_probability", "summary cell");
    return c;
}

}  // namespace

void write_summary_json(const std::filesystem::path& path, const MetricsSummary& summary) {
    json doc;
    doc["mode"] = summary.mode;
    doc["seed"] = summary.seed;
    doc["post_convergence_from"] = summary.post_convergence_from;
    doc["cells"] = json::array();
    for (const CellSummary& c : summary.cells) doc["cells"].push_back(cell_to_json(c));
    json series;
    series["reward"] = json::array();
    series["mean_rv_speed"] = json::array();
    series["rolling_cap_probability"] = summary.rolling_cap_probability;
    for (const EpisodeRow& r : summary.episodes) {
        series["reward"].push_back(r.reward);
        series["mean_rv_speed"].push_back(r.mean_rv_speed);
    }
    doc["series"] = std::move(series);

    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << doc.dump(2) << "\n";
}

MetricsSummary read_summary_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open summary: " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw std::runtime_error("summary " + path.string() + ": invalid JSON: " + e.what());
    }
    MetricsSummary s;
    s.mode = detail::get_string(doc, "mode", "summary");
    s.seed = detail::require_key(doc, "seed", "summary").get<uint64_t>();
    s.post_convergence_from =
        static_cast<int>(detail::get_integer(doc, "post_convergence_from", "summary"));
    const json& cells = detail::require_key(doc, "cells", "summary");
    if (!cells.is_array()) throw std::runtime_error("summary: \"cells\" must be an array");
    for (const json& c : cells) s.cells.push_back(cell_from_json(c));
    if (doc.contains("series") && doc["series"].contains("rolling_cap_probability"))
        s.rolling_cap_probability =
            doc["series"]["rolling_cap_probability"].get<std::vector<double>>();
    return s;
}

ComparisonTable compare_summaries(const std::vector<std::string>& labels,
                                  const std::vector<MetricsSummary>& summaries) {
    if (summaries.empty()) throw std::runtime_error("compare: need at least one summary");
    if (labels.size() != summaries.size())
        throw std::runtime_error("compare: one label per summary required");

    const std::vector<CellSummary>& base = summaries[0].cells;
    for (const MetricsSummary& s : summaries) {
        if (s.cells.size() != base.size())
            throw std::runtime_error("compare: summaries use different evaluation grids");
        for (size_t i = 0; i < base.size(); ++i)
            if (s.cells[i].ratio != base[i].ratio || s.cells[i].total != base[i].total)
                throw std::runtime_error("compare: summaries use different evaluation grids");
    }

    ComparisonTable t;
    t.labels = labels;
    t.base_cells = base;
    for (const MetricsSummary& s : summaries) t.cells.push_back(s.cells);
    return t;
}

void write_comparison_csv(const std::filesystem::path& path, const ComparisonTable& table) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "ratio,total,label,mean_reward,post_conv_mean_reward,mean_rv_speed,cap_probability,"
           "delta_mean_reward,delta_post_conv_mean_reward,delta_mean_rv_speed,"
           "delta_cap_probability\n";
    for (size_t cell = 0; cell < table.base_cells.size(); ++cell) {
        const CellSummary& ref = table.cells[0][cell];
        for (size_t l = 0; l < table.labels.size(); ++l) {
            const CellSummary& c = table.cells[l][cell];
            out << format_double(c.ratio) << ',' << c.total << ',' << table.labels[l] << ','
                << format_double(c.mean_reward) << ',' << format_double(c.post_conv_mean_reward)
                << ',' << format_double(c.mean_rv_speed) << ','
                << format_double(c.cap_probability) << ','
                << format_double(c.mean_reward - ref.mean_reward) << ','
                << format_double(c.post_conv_mean_reward - ref.post_conv_mean_reward) << ','
                << format_double(c.mean_rv_speed - ref.mean_rv_speed) << ','
                << format_double(c.cap_probability - ref.cap_probability) << "\n";
        }
    }
}

void print_comparison(std::ostream& out, const ComparisonTable& table) {
    for (size_t cell = 0; cell < table.base_cells.size(); ++cell) {
        const CellSummary& head = table.base_cells[cell];
        out << "ratio=" << format_double(head.ratio) << " total=" << head.total << "\n";
        const CellSummary& ref = table.cells[0][cell];
        for (size_t l = 0; l < table.labels.size(); ++l) {
            const CellSummary& c = table.cells[l][cell];
            out << "  " << table.labels[l] << ": mean_reward=" << format_double(c.mean_reward)
                << " post_conv=" << format_double(c.post_conv_mean_reward)
                << " mean_rv_speed=" << format_double(c.mean_rv_speed)
                << " cap_prob=" << format_double(c.cap_probability);
            if (l > 0)
                out << " (delta post_conv "
                    << format_double(c.post_conv_mean_reward - ref.post_conv_mean_reward) << ")";
            out << "\n";
        }
    }
}

}  // namespace gaq
