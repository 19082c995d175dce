#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "gea/codec/action_space.hpp"

namespace gea::envs {

/// Seeds at or above this value draw from the held-out generalization split
/// (unseen color/shape combinations in GridNav).
inline constexpr std::uint64_t kTestSeedBase = 1'000'000;

struct EnvSpec {
    std::string name;
    codec::ActionSpaceSpec action_space;
    int obs_dim = 0;
    int max_steps = 0;
    std::string reward_desc;
    // Reference scores (mean return) for min-max score normalization.
    double random_ref = 0.0;
    double expert_ref = 1.0;
    // Prompt template fields.
    std::string agent_desc;
    std::string sim_name;
    std::string camera_desc;
    int priv_dim = 2;
};

struct EnvAction {
    bool discrete = true;
    std::string text;
    std::vector<double> vec;

    static EnvAction make_discrete(std::string t) { return {true, std::move(t), {}}; }
    static EnvAction make_continuous(std::vector<double> v) { return {false, "", std::move(v)}; }
};

struct StepResult {
    std::vector<double> obs;
    double reward = 0.0;
    bool done = false;
    bool success = false;
};

/// One environment instance; reset(seed) starts an episode that is a pure
/// function of (spec, seed). done is absorbing: stepping past it throws.
class Env {
public:
    virtual ~Env() = default;
    virtual const EnvSpec& spec() const = 0;
    /// Returns (initial observation, instruction).
    virtual std::pair<std::vector<double>, std::string> reset(std::uint64_t seed) = 0;
    virtual StepResult step(const EnvAction& action) = 0;
    virtual bool done() const = 0;
    virtual bool succeeded() const = 0;
    virtual int steps_taken() const = 0;
    /// Trainer-only features for the value head (never part of observations).
    virtual std::vector<double> privileged() const = 0;
};

/// Expert policy for one built-in environment family.
class ScriptedExpert {
public:
    virtual ~ScriptedExpert() = default;
    virtual EnvAction act(const Env& env) const = 0;
};

}  // namespace gea::envs
