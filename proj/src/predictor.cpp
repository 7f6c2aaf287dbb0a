#include "execstream/predictor.hpp"

#include <algorithm>

#include "execstream/errors.hpp"

namespace execstream {
namespace {

std::string describe(const char* what, ActionId id, std::size_t segment) {
  return std::string(what) + " action=" + std::to_string(id) + " segment=" + std::to_string(segment);
}

}  // namespace

std::string_view to_string(Stage stage) {
  switch (stage) {
    case Stage::constructing:
      return "constructing";
    case Stage::matching:
      return "matching";
    case Stage::generating:
      return "generating";
  }
  return "unknown";
}

std::vector<std::size_t> first_segment_cuts(std::size_t segment_len, const PredictorConfig& config) {
  const std::size_t seg_max = config.seg_max;
  const std::size_t middle = (seg_max + 1) / 2 - 1;  // 1-based ceil(seg_max / 2)
  std::vector<std::size_t> cuts{0};
  if (config.checkpoints == CheckpointMode::figure) {
    cuts.push_back(2);
  } else {
    cuts.push_back(1);
    if (seg_max >= 3) cuts.push_back(seg_max - 3);
  }
  if (config.first_segment_matches >= 3) cuts.push_back(middle);
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
  std::erase_if(cuts, [&](std::size_t c) { return c != 0 && c >= segment_len; });
  return cuts;
}

std::optional<SegmentRef> fallback_scan(std::span<const ActionPtr> actions, BlockIndex block) {
  for (const auto& action : actions) {
    for (std::size_t s = 0; s < action->segments.size(); ++s) {
      const auto& blocks = action->segments[s].blocks;
      if (std::find(blocks.begin(), blocks.end(), block) != blocks.end()) {
        return SegmentRef{action->id, s};
      }
    }
  }
  return std::nullopt;
}

PredictorDecision construct_step(ActionSession& session, BlockIndex block, Micros now,
                                 const PredictorConfig& config) {
  PredictorDecision d;
  session.construction_buffer.push_back(block);
  session.last_activity = now;
  d.respond_blocks = {block};
  d.state_change = "construct recorded=" + std::to_string(session.construction_buffer.size());
  if (now - session.construction_start >= config.construction_window) d.construction_due = true;
  return d;
}

std::optional<PredictorDecision> match_first_segment(ActionSession& session, const ActionPtr& action,
                                                     BlockIndex block, const PredictorConfig& config) {
  const auto& first = action->segments.front().blocks;
  auto cuts = first_segment_cuts(first.size(), config);
  if (session.match_checkpoint >= cuts.size()) return std::nullopt;
  auto begin = cuts[session.match_checkpoint];
  if (first[begin] != block) return std::nullopt;
  auto end = session.match_checkpoint + 1 < cuts.size() ? cuts[session.match_checkpoint + 1] : first.size();

  PredictorDecision d;
  d.respond_blocks.assign(first.begin() + static_cast<std::ptrdiff_t>(begin),
                          first.begin() + static_cast<std::ptrdiff_t>(end));
  d.served = SegmentRef{action->id, 0};
  d.served_action = action;
  ++session.match_checkpoint;
  if (end == first.size()) {
    session.stage = Stage::generating;
    session.next_segment = 1;
    d.session_completed = action->segments.size() == 1;
    d.state_change = describe("matched; generating", action->id, 0);
  } else {
    session.stage = Stage::matching;
    d.state_change = describe("matching", action->id, 0) + " checkpoint=" + std::to_string(end + 1);
  }
  return d;
}

std::optional<PredictorDecision> generate_step(ActionSession& session, const ActionPtr& action,
                                               BlockIndex block) {
  if (session.next_segment >= action->segments.size()) return std::nullopt;
  const auto& seg = action->segments[session.next_segment];
  if (seg.front() != block) return std::nullopt;
  PredictorDecision d;
  d.respond_blocks = seg.blocks;
  d.served = SegmentRef{action->id, session.next_segment};
  d.served_action = action;
  d.state_change = describe("generate", action->id, session.next_segment);
  ++session.next_segment;
  d.session_completed = session.next_segment >= action->segments.size();
  return d;
}

Predictor::Predictor(PredictorConfig config, ActionStore store) : config_(config) {
  if (config_.seg_max < 2) throw ValidationError("seg_max must be at least 2");
  if (store.action_count() > 0 && store.seg_max != config_.seg_max) {
    throw ValidationError("action store built with seg_max " + std::to_string(store.seg_max) +
                          " but predictor configured with " + std::to_string(config_.seg_max));
  }
  for (auto& [name, list] : store.actions) {
    auto& dst = actions_[name];
    for (auto& a : list) {
      if (a.segments.empty()) throw ValidationError("action without segments");
      dst.push_back(std::make_shared<const Action>(std::move(a)));
    }
  }
}

const std::vector<ActionPtr>& Predictor::actions_locked(std::string_view executable) const {
  static const std::vector<ActionPtr> kNone;
  auto it = actions_.find(executable);
  return it == actions_.end() ? kNone : it->second;
}

ActionPtr Predictor::action_locked(std::string_view executable, ActionId id) const {
  for (const auto& a : actions_locked(executable)) {
    if (a->id == id) return a;
  }
  return nullptr;
}

PredictorDecision Predictor::begin_match(ActionSession& session, BlockIndex block, Micros now,
                                         bool& keep_session) {
  session.stage = Stage::matching;
  session.action_id.reset();
  session.match_checkpoint = 0;
  session.next_segment = 0;
  session.construction_buffer.clear();
  session.last_activity = now;
  keep_session = true;

  const auto& list = actions_locked(session.executable);
  for (const auto& action : list) {
    if (action->segments.front().front() != block) continue;
    session.action_id = action->id;
    auto d = *match_first_segment(session, action, block, config_);
    keep_session = !d.session_completed;
    return d;
  }

  if (auto ref = fallback_scan(list, block)) {
    auto action = action_locked(session.executable, ref->action);
    const auto& blocks = action->segments[ref->segment].blocks;
    auto pos = std::find(blocks.begin(), blocks.end(), block);
    PredictorDecision d;
    d.respond_blocks.assign(pos, blocks.end());
    d.served = ref;
    d.served_action = action;
    d.state_change = describe("rematched by scan; generating", ref->action, ref->segment);
    session.stage = Stage::generating;
    session.action_id = ref->action;
    session.next_segment = ref->segment + 1;
    d.session_completed = session.next_segment >= action->segments.size();
    keep_session = !d.session_completed;
    return d;
  }

  session.stage = Stage::constructing;
  session.construction_start = now;
  auto d = construct_step(session, block, now, config_);
  d.state_change = "construct started";
  return d;
}

std::optional<ActionPtr> Predictor::finalize_locked(ActionSession& session) {
  if (session.stage != Stage::constructing || session.construction_buffer.empty()) return std::nullopt;
  auto buffer = std::move(session.construction_buffer);
  session.construction_buffer.clear();
  auto& list = actions_[session.executable];
  for (const auto& existing : list) {
    if (existing->flatten() == buffer) return std::nullopt;
  }
  Action action;
  action.executable = session.executable;
  action.kind = config_.constructed_kind;
  action.id = list.empty() ? 0 : list.back()->id + 1;
  action.segments = segment_split(buffer, config_.seg_max);
  auto ptr = std::make_shared<const Action>(std::move(action));
  list.push_back(ptr);
  return ptr;
}

std::vector<ActionPtr> Predictor::expire_locked(Micros now, const SessionKey* skip) {
  std::vector<ActionPtr> created;
  for (auto it = sessions_.begin(); it != sessions_.end();) {
    auto& s = it->second;
    if (skip != nullptr && it->first == *skip) {
      ++it;
      continue;
    }
    bool construction_over =
        s.stage == Stage::constructing && now - s.construction_start >= config_.construction_window;
    bool idle = now - s.last_activity > config_.session_idle_timeout;
    if (construction_over || idle) {
      if (auto a = finalize_locked(s)) created.push_back(*a);
      it = sessions_.erase(it);
    } else {
      ++it;
    }
  }
  return created;
}

PredictorDecision Predictor::handle_request(const Token& token, std::string_view executable,
                                            BlockIndex block, Micros now) {
  std::lock_guard lock(mu_);
  SessionKey key{token, std::string(executable)};
  auto created = expire_locked(now, &key);

  auto it = sessions_.find(key);
  if (it != sessions_.end() && now - it->second.last_activity > config_.session_idle_timeout) {
    if (auto a = finalize_locked(it->second)) created.push_back(*a);
    sessions_.erase(it);
    it = sessions_.end();
  }

  PredictorDecision d;
  bool keep = true;
  if (it == sessions_.end()) {
    ActionSession fresh;
    fresh.token = token;
    fresh.executable = std::string(executable);
    d = begin_match(fresh, block, now, keep);
    it = sessions_.emplace(key, std::move(fresh)).first;
  } else {
    auto& s = it->second;
    s.last_activity = now;
    std::optional<PredictorDecision> step;
    switch (s.stage) {
      case Stage::constructing:
        step = construct_step(s, block, now, config_);
        break;
      case Stage::matching:
        if (auto action = action_locked(executable, *s.action_id)) {
          step = match_first_segment(s, action, block, config_);
        }
        break;
      case Stage::generating:
        if (auto action = action_locked(executable, *s.action_id)) step = generate_step(s, action, block);
        break;
    }
    if (step) {
      d = std::move(*step);
      keep = !d.session_completed;
    } else {
      d = begin_match(s, block, now, keep);
    }
  }

  if (d.construction_due) {
    if (auto a = finalize_locked(it->second)) created.push_back(*a);
    d.session_completed = true;
    keep = false;
  }
  if (!keep) sessions_.erase(it);
  d.new_actions = std::move(created);
  return d;
}

std::optional<ActionPtr> Predictor::finish_session(const Token& token, std::string_view executable,
                                                   Micros /*now*/) {
  std::lock_guard lock(mu_);
  auto it = sessions_.find(SessionKey{token, std::string(executable)});
  if (it == sessions_.end()) return std::nullopt;
  auto created = finalize_locked(it->second);
  sessions_.erase(it);
  return created;
}

std::vector<ActionPtr> Predictor::expire(Micros now) {
  std::lock_guard lock(mu_);
  return expire_locked(now, nullptr);
}

std::vector<ActionPtr> Predictor::finalize_all() {
  std::lock_guard lock(mu_);
  std::vector<ActionPtr> created;
  for (auto& [_, s] : sessions_) {
    if (auto a = finalize_locked(s)) created.push_back(*a);
  }
  sessions_.clear();
  return created;
}

ActionStore Predictor::store() const {
  std::lock_guard lock(mu_);
  ActionStore out;
  out.seg_max = config_.seg_max;
  for (const auto& [name, list] : actions_) {
    for (const auto& a : list) out.put(*a);
  }
  return out;
}

std::vector<ActionPtr> Predictor::actions(std::string_view executable) const {
  std::lock_guard lock(mu_);
  return actions_locked(executable);
}

ActionPtr Predictor::action(std::string_view executable, ActionId id) const {
  std::lock_guard lock(mu_);
  return action_locked(executable, id);
}

std::vector<ActionSession> Predictor::sessions() const {
  std::lock_guard lock(mu_);
  std::vector<ActionSession> out;
  for (const auto& [_, s] : sessions_) out.push_back(s);
  return out;
}

}  // namespace execstream
