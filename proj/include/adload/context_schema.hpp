#pragma once

#include <cstddef>

namespace adload {

// Fixed ordering of the context feature vector ("adlog-v1" schema). Counters
// start at zero for a fresh user; the ad-gap feature uses -1 when no ad has
// been seen yet.
enum ContextFeature : std::size_t {
  kHourEngagements = 0,
  kDayEngagements,
  kLoginsYesterday,
  kAvgInactivityDaysWeek,
  kFatigueScore,
  kPlatformAgeDays,
  kLanguageHindi,
  kLanguageTamil,
  kLanguageTelugu,
  kLanguageKannada,
  kGenreAffinity,
  kDistinctGenres,
  kAvgPostAgeDays,
  kPrevAdSlot1,
  kPrevAdSlot2,
  kPrevAdSlot3,
  kPrevAdSlot4,
  kPrevAdSlot5,
  kAdGap,  // -1 sentinel when absent
  kAvgAdLoadLast3,
  kAvgAdLoadLast5,
  kSessionAdImpressions,
  kSessionMinutes,
  kClicks7d,
  kImpressions7d,
  kContextFeatureCount
};

inline constexpr std::size_t kContextDim = kContextFeatureCount;

}  // namespace adload
