#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

namespace triage::learn {

/// Cartesian product of named value lists. Configs are JSON objects keyed by axis name.
struct SearchSpace {
    std::vector<std::pair<std::string, std::vector<nlohmann::json>>> axes;

    std::size_t size() const;
    nlohmann::json config_at(std::size_t index) const;

    static SearchSpace lr_grid();
    static SearchSpace gbdt_grid();
    static SearchSpace cnn_grid();
};

struct Trial {
    std::size_t trial = 0;
    nlohmann::json config;
    std::optional<double> val_auroc;
    std::string status;  // "ok" or a one-line failure reason

    nlohmann::json to_json() const;
};

struct SearchResult {
    std::vector<Trial> log;
    std::optional<std::size_t> best;  // index into log

    const nlohmann::json& best_config() const;
    double best_auroc() const;
    void write_log(std::ostream& out) const;
};

/// Objective returns validation AUROC; a thrown triage::Error marks the trial
/// failed and the search continues.
using Objective = std::function<double(const nlohmann::json&)>;

/// Draws min(budget, |space|) configs uniformly without replacement and
/// keeps the first config with the highest validation AUROC.
SearchResult random_search(const SearchSpace& space, std::size_t budget, std::uint64_t seed,
                           const Objective& objective);

}  // namespace triage::learn
