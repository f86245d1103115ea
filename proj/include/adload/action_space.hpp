#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace adload {

// A feed fetch of 10 posts is served as two independent 5-post sub-feeds;
// each sub-feed decision picks a set of ad slots.
inline constexpr int kSubfeedLength = 5;
inline constexpr int kMaxBitmask = (1 << kSubfeedLength) - 1;  // 31

struct config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct invalid_state_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// One bandit arm: the ad slots chosen within a 5-post sub-feed.
struct FeedAction {
  std::vector<int> slots;  // sorted, distinct, each in 1..5
  int subfeed_index = 0;   // 0 = first sub-feed of the fetch

  int ad_count() const { return static_cast<int>(slots.size()); }
  bool has_slot(int slot) const;

  // Wire format: bit k-1 <-> slot k, values 0..31.
  int to_bitmask() const;
  static FeedAction from_bitmask(int mask, int subfeed_index);

  bool operator==(const FeedAction& other) const {
    return slots == other.slots && subfeed_index == other.subfeed_index;
  }
};

struct ActionConstraints {
  int max_ads = 2;
  // Consecutive ads must be >= this many positions apart on the concatenated
  // feed. Within a sub-feed the pairwise difference must be >= the value;
  // across sub-feeds the first slot s must satisfy prev_last_ad_offset + s >
  // the value.
  int min_position_difference = 4;
  bool forbid_slot1_on_first_subfeed = true;

  void validate() const;
  std::uint64_t hash() const;
  bool operator==(const ActionConstraints&) const = default;
};

// Identifies the enumeration context a catalog was built for.
struct CatalogKey {
  int subfeed_index = 0;
  // Posts between the previous feed's last ad and position 1 of this
  // sub-feed; absent on the first fetch of a session (no ad seen yet).
  std::optional<int> prev_last_ad_offset;

  bool operator==(const CatalogKey&) const = default;
  std::string to_string() const;
};

struct CatalogKeyHash {
  std::size_t operator()(const CatalogKey& k) const {
    std::size_t h = static_cast<std::size_t>(k.subfeed_index) * 1000003u;
    h ^= k.prev_last_ad_offset ? static_cast<std::size_t>(*k.prev_last_ad_offset + 1) : 0u;
    return h;
  }
};

// The valid actions for one context, in deterministic order
// (|slots| ascending, then lexicographic slots). action_id is the index.
class ActionCatalog {
 public:
  ActionCatalog() = default;
  ActionCatalog(std::vector<FeedAction> actions, CatalogKey key, ActionConstraints constraints);

  std::size_t size() const { return actions_.size(); }
  const FeedAction& action(std::size_t action_id) const { return actions_.at(action_id); }
  const std::vector<FeedAction>& actions() const { return actions_; }
  const CatalogKey& key() const { return key_; }
  const ActionConstraints& constraints() const { return constraints_; }

  // Returns the action_id for an action, or nullopt when not in the catalog.
  std::optional<std::size_t> find(const FeedAction& action) const;
  std::optional<std::size_t> find_bitmask(int mask) const;

 private:
  std::vector<FeedAction> actions_;
  std::vector<int> id_by_bitmask_;  // -1 when the bitmask is not valid here
  CatalogKey key_;
  ActionConstraints constraints_;
};

// True iff the action would appear in enumerate_actions for the same context.
bool validate_action(const FeedAction& action, const ActionConstraints& constraints,
                     std::optional<int> prev_last_ad_offset);

ActionCatalog enumerate_actions(const ActionConstraints& constraints, int subfeed_index,
                                std::optional<int> prev_last_ad_offset);

// 1/|catalog|; throws invalid_state_error on an empty catalog.
double uniform_propensity(const ActionCatalog& catalog);

}  // namespace adload
