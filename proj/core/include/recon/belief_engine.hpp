#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "recon/config_space.hpp"
#include "recon/knowledge_base.hpp"

namespace recon {

// Conditional presence probabilities for software, chained in a fixed
// order: Pr(s present | os, set of earlier chain entries present).
class DependencyModel {
public:
    DependencyModel() = default;
    explicit DependencyModel(std::vector<std::string> chain_order);

    const std::vector<std::string>& chain_order() const noexcept { return chain_order_; }

    void set_conditional(std::string software, std::string os,
                         std::vector<std::string> present_predecessors, double probability);
    // Throws incomplete_dependency_model when the context has no entry.
    double conditional(const std::string& software, const std::string& os,
                       std::vector<std::string> present_predecessors) const;

private:
    using Key = std::tuple<std::string, std::string, std::vector<std::string>>;
    std::vector<std::string> chain_order_;
    std::map<Key, double> conditional_;
};

// Prior over a configuration space from an OS prior and chained software
// conditionals: mass(os, S) = os_prior(os) * product over the chain of
// Pr(s | context) or 1 - Pr(s | context), renormalized over the
// admissible set.
Belief chain_rule_prior(SpacePtr space, const std::map<std::string, double>& os_prior,
                        const DependencyModel& dep);

struct UpdateResult {
    Belief posterior;
    // True when every configuration with prior mass received likelihood
    // zero; the update was refused and posterior equals the prior.
    bool evidence_zero = false;
};

// One Bayes step: posterior mass proportional to likelihood * prior,
// computed in log space and renormalized.
UpdateResult bayes_update(const Belief& belief, const Observation& obs, const KnowledgeBase& kb);

struct MapEstimate {
    Configuration configuration;
    double probability = 0.0;
    // Another configuration holds exactly the same mass; the first in
    // enumeration order is reported.
    bool tied = false;
};

MapEstimate map_estimate(const Belief& belief);

struct BeliefStep {
    std::size_t obs_index = 0; // 0 is the prior
    Belief belief;
};

struct BeliefTrajectory {
    std::vector<BeliefStep> steps;        // steps[0] is the prior
    std::vector<MapEstimate> map_sequence; // MAP of each step
    std::vector<std::size_t> evidence_zero_steps;

    const Belief& final_belief() const { return steps.back().belief; }
    const MapEstimate& final_map() const { return map_sequence.back(); }
};

// Folds bayes_update over the stream, recording the prior and every
// posterior: |stream| + 1 steps. Refused (evidence-zero) steps keep the
// running belief and are listed in evidence_zero_steps.
BeliefTrajectory update_stream(const Belief& prior, const std::vector<Observation>& stream,
                               const KnowledgeBase& kb);

// Long-form CSV: obs_index,configuration_label,probability.
std::string trajectory_to_csv(const BeliefTrajectory& trajectory);

// Wide-form CSV: one column per configuration label, rows named
// "init. belief", "obs. 1", "obs. 2", ...
std::string trajectory_to_wide_csv(const BeliefTrajectory& trajectory);

// Explicit joint distribution over the product of several nodes' spaces,
// in mixed-radix order (first node is the most significant digit). Test
// oracle for the factorized per-node representation; bounded to small
// products.
class JointBelief {
public:
    static constexpr std::size_t kMaxJointSize = 100'000;

    JointBelief(std::vector<NodeIdentity> nodes, std::vector<SpacePtr> spaces,
                std::vector<double> mass);

    static JointBelief from_marginals(const NetworkBelief& network);

    const std::vector<NodeIdentity>& nodes() const noexcept { return nodes_; }
    const std::vector<SpacePtr>& spaces() const noexcept { return spaces_; }
    const std::vector<double>& mass() const noexcept { return mass_; }
    std::size_t size() const noexcept { return mass_.size(); }

    Belief marginal(std::size_t node_index) const;

private:
    std::vector<NodeIdentity> nodes_;
    std::vector<SpacePtr> spaces_;
    std::vector<double> mass_;
};

// Brute-force posterior over the joint space: weights every joint
// assignment by the product of its per-node likelihood products, using
// direct probability arithmetic (no log-space shortcut), then
// renormalizes. Certifies the factorized update path.
JointBelief joint_update_oracle(const JointBelief& prior,
                                const std::map<NodeIdentity, std::vector<Observation>>& streams,
                                const KnowledgeBase& kb);

} // namespace recon
