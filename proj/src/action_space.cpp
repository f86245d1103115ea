#include "adload/action_space.hpp"

#include <algorithm>

#include "adload/rng.hpp"

namespace adload {

bool FeedAction::has_slot(int slot) const {
  return std::find(slots.begin(), slots.end(), slot) != slots.end();
}

int FeedAction::to_bitmask() const {
  int mask = 0;
  for (int s : slots) mask |= 1 << (s - 1);
  return mask;
}

FeedAction FeedAction::from_bitmask(int mask, int subfeed_index) {
  if (mask < 0 || mask > kMaxBitmask)
    throw std::invalid_argument("FeedAction: bitmask out of range 0..31");
  FeedAction a;
  a.subfeed_index = subfeed_index;
  for (int s = 1; s <= kSubfeedLength; ++s)
    if (mask & (1 << (s - 1))) a.slots.push_back(s);
  return a;
}

void ActionConstraints::validate() const {
  if (max_ads < 0 || max_ads > kSubfeedLength)
    throw config_error("ActionConstraints: max_ads must be in 0..5");
  if (min_position_difference < 1)
    throw config_error("ActionConstraints: min_position_difference must be >= 1");
}

std::uint64_t ActionConstraints::hash() const {
  const std::string canon = std::to_string(max_ads) + "|" +
                            std::to_string(min_position_difference) + "|" +
                            (forbid_slot1_on_first_subfeed ? "1" : "0");
  return fnv1a64(canon);
}

std::string CatalogKey::to_string() const {
  return "subfeed=" + std::to_string(subfeed_index) + ",offset=" +
         (prev_last_ad_offset ? std::to_string(*prev_last_ad_offset) : std::string("absent"));
}

ActionCatalog::ActionCatalog(std::vector<FeedAction> actions, CatalogKey key,
                             ActionConstraints constraints)
    : actions_(std::move(actions)),
      id_by_bitmask_(kMaxBitmask + 1, -1),
      key_(key),
      constraints_(constraints) {
  for (std::size_t i = 0; i < actions_.size(); ++i)
    id_by_bitmask_[static_cast<std::size_t>(actions_[i].to_bitmask())] = static_cast<int>(i);
}

std::optional<std::size_t> ActionCatalog::find(const FeedAction& action) const {
  return find_bitmask(action.to_bitmask());
}

std::optional<std::size_t> ActionCatalog::find_bitmask(int mask) const {
  if (mask < 0 || mask > kMaxBitmask || id_by_bitmask_.empty()) return std::nullopt;
  const int id = id_by_bitmask_[static_cast<std::size_t>(mask)];
  if (id < 0) return std::nullopt;
  return static_cast<std::size_t>(id);
}

bool validate_action(const FeedAction& action, const ActionConstraints& constraints,
                     std::optional<int> prev_last_ad_offset) {
  constraints.validate();
  if (action.ad_count() > constraints.max_ads) return false;

  std::vector<int> slots = action.slots;
  std::sort(slots.begin(), slots.end());
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (slots[i] < 1 || slots[i] > kSubfeedLength) return false;
    if (i > 0) {
      if (slots[i] == slots[i - 1]) return false;
      if (slots[i] - slots[i - 1] < constraints.min_position_difference) return false;
    }
  }
  if (!slots.empty()) {
    if (constraints.forbid_slot1_on_first_subfeed && action.subfeed_index == 0 && slots.front() == 1)
      return false;
    if (prev_last_ad_offset &&
        *prev_last_ad_offset + slots.front() <= constraints.min_position_difference)
      return false;
  }
  return true;
}

ActionCatalog enumerate_actions(const ActionConstraints& constraints, int subfeed_index,
                                std::optional<int> prev_last_ad_offset) {
  constraints.validate();
  if (subfeed_index < 0) throw config_error("enumerate_actions: subfeed_index must be >= 0");
  if (prev_last_ad_offset && *prev_last_ad_offset < 0)
    throw config_error("enumerate_actions: prev_last_ad_offset must be >= 0");

  std::vector<FeedAction> valid;
  for (int mask = 0; mask <= kMaxBitmask; ++mask) {
    FeedAction a = FeedAction::from_bitmask(mask, subfeed_index);
    if (validate_action(a, constraints, prev_last_ad_offset)) valid.push_back(std::move(a));
  }
  std::sort(valid.begin(), valid.end(), [](const FeedAction& a, const FeedAction& b) {
    if (a.ad_count() != b.ad_count()) return a.ad_count() < b.ad_count();
    return a.slots < b.slots;
  });
  return ActionCatalog(std::move(valid), CatalogKey{subfeed_index, prev_last_ad_offset},
                       constraints);
}

double uniform_propensity(const ActionCatalog& catalog) {
  if (catalog.size() == 0) throw invalid_state_error("uniform_propensity: empty catalog");
  return 1.0 / static_cast<double>(catalog.size());
}

}  // namespace adload
