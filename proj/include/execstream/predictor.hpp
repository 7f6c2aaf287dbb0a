#pragma once

// Server-side action predictor.
//
// Each (token, executable) pair owns a session that moves through three
// stages:
//
//   constructing  every request is answered with just the requested block and
//                 recorded; after the construction window (or an end-of-run
//                 notice) the recording is split into segments and stored as a
//                 new action.
//   matching      the first segment of a stored action is confirmed in a few
//                 round trips. With the default cut points the first request
//                 returns positions 1-2, the request for position 3 returns the
//                 rest of the segment.
//   generating    each later segment is pushed whole as soon as its first block
//                 is requested.
//
// Any request that breaks the expected sequence starts a new match: first by
// the first block of an action, then by scanning all segments, and if the block
// is unknown, by constructing a new action.

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "execstream/model.hpp"

namespace execstream {

enum class Stage { constructing, matching, generating };
enum class CheckpointMode { figure, prose };

std::string_view to_string(Stage stage);

struct PredictorConfig {
  std::uint16_t seg_max = kDefaultSegMax;
  CheckpointMode checkpoints = CheckpointMode::figure;
  int first_segment_matches = 2;  // 2 or 3
  Micros construction_window = 3'000'000;
  Micros session_idle_timeout = 10'000'000;
  ActionKind constructed_kind = ActionKind::workload;
};

struct SegmentRef {
  ActionId action = 0;
  std::size_t segment = 0;
  bool operator==(const SegmentRef&) const = default;
};

using ActionPtr = std::shared_ptr<const Action>;

struct ActionSession {
  Token token;
  std::string executable;
  Stage stage = Stage::constructing;
  std::optional<ActionId> action_id;
  std::size_t match_checkpoint = 0;  // index into the first-segment cut list
  std::size_t next_segment = 0;
  std::vector<BlockIndex> construction_buffer;
  Micros construction_start = 0;
  Micros last_activity = 0;
};

struct PredictorDecision {
  /// Blocks to return now; the requested block is always first.
  std::vector<BlockIndex> respond_blocks;
  std::string state_change;
  /// Segment the response was sliced from, if any.
  std::optional<SegmentRef> served;
  ActionPtr served_action;
  bool session_completed = false;
  /// Set by construct_step when the construction window has elapsed.
  bool construction_due = false;
  /// Actions finalized while handling this request.
  std::vector<ActionPtr> new_actions;
};

/// Start offsets (0-based) of the responses that deliver a first segment of
/// `segment_len` blocks. The first entry is always 0.
std::vector<std::size_t> first_segment_cuts(std::size_t segment_len, const PredictorConfig& config);

/// First (lowest action id, lowest segment index) segment containing `block`.
/// `actions` must be ordered by id.
std::optional<SegmentRef> fallback_scan(std::span<const ActionPtr> actions, BlockIndex block);

/// Records `block`; responds with it alone.
PredictorDecision construct_step(ActionSession& session, BlockIndex block, Micros now,
                                 const PredictorConfig& config);

/// Checkpoint protocol on the first segment. nullopt means the request did
/// not hit the expected checkpoint and the caller must re-match.
std::optional<PredictorDecision> match_first_segment(ActionSession& session, const ActionPtr& action,
                                                     BlockIndex block, const PredictorConfig& config);

/// Pushes the next segment when its first block is requested; nullopt on divergence.
std::optional<PredictorDecision> generate_step(ActionSession& session, const ActionPtr& action,
                                               BlockIndex block);

class Predictor {
 public:
  explicit Predictor(PredictorConfig config = {}, ActionStore store = {});

  PredictorDecision handle_request(const Token& token, std::string_view executable, BlockIndex block,
                                   Micros now);

  /// End-of-run notice: finalizes a construction in progress and closes the session.
  std::optional<ActionPtr> finish_session(const Token& token, std::string_view executable, Micros now);

  /// Finalizes constructions whose window elapsed and drops idle sessions.
  std::vector<ActionPtr> expire(Micros now);

  /// Finalizes every construction in progress and clears all sessions.
  std::vector<ActionPtr> finalize_all();

  ActionStore store() const;
  std::vector<ActionPtr> actions(std::string_view executable) const;
  ActionPtr action(std::string_view executable, ActionId id) const;
  std::vector<ActionSession> sessions() const;
  const PredictorConfig& config() const { return config_; }

 private:
  using SessionKey = std::tuple<Token, std::string>;

  PredictorDecision begin_match(ActionSession& session, BlockIndex block, Micros now,
                                bool& keep_session);
  std::optional<ActionPtr> finalize_locked(ActionSession& session);
  std::vector<ActionPtr> expire_locked(Micros now, const SessionKey* skip);
  const std::vector<ActionPtr>& actions_locked(std::string_view executable) const;
  ActionPtr action_locked(std::string_view executable, ActionId id) const;

  PredictorConfig config_;
  mutable std::mutex mu_;
  std::map<std::string, std::vector<ActionPtr>, std::less<>> actions_;
  std::map<SessionKey, ActionSession> sessions_;
};

}  // namespace execstream
