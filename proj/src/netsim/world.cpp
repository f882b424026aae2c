#include "ehr/netsim/world.hpp"

#include <algorithm>

#include "ehr/common/ids.hpp"
#include "ehr/common/utf8.hpp"

namespace ehr::netsim {
namespace {

using nlohmann::ordered_json;

constexpr std::string_view kInternetPrefix = "INTERNET:";
constexpr std::string_view kUssdPrefix = "USSD_CHANNEL:";

std::string_view errc_or_ok(const Error* e) { return e ? errc_name(e->code) : "OK"; }

/// Sync messages carried over one facility's internet link. Each leg is a
/// separate delivery; the transport's clock moves with the arrivals so the
/// pull follows the push in virtual time.
class SimTransport final : public sync::SyncTransport {
 public:
  SimTransport(World& world, std::string link) : world_(world), link_(std::move(link)) {}

  Result<sync::PushAck> push(const sync::SyncBatch& batch, Millis now) override {
    clock_ = std::max(clock_, now - world_.wall(0));
    auto out = leg("sync.push n=" + std::to_string(batch.events.size()));
    if (!out) return out.error();
    auto ack = sync::accept_push(world_.central(), batch, world_.wall(clock_));
    if (!ack) return ack.error();
    auto back = leg("sync.push.ack accepted=" + std::to_string(ack->accepted));
    if (!back) return back.error();
    return ack;
  }

  Result<sync::SyncBatch> pull(std::string_view, std::size_t cursor, Millis now) override {
    clock_ = std::max(clock_, now - world_.wall(0));
    auto out = leg("sync.pull cursor=" + std::to_string(cursor));
    if (!out) return out.error();
    auto batch = sync::serve_pull(world_.central(), cursor);
    if (!batch) return batch.error();
    auto back = leg("sync.pull.reply n=" + std::to_string(batch->events.size()));
    if (!back) return back.error();
    return batch;
  }

 private:
  Status leg(const std::string& message) {
    auto d = world_.deliver(message, link_, clock_);
    if (!d) return d.error();
    if (!d->delivered) return make_error(Errc::link_down, link_ + " down");
    clock_ = d->at;
    return Ok{};
  }

  World& world_;
  std::string link_;
  Millis clock_ = 0;
};

}  // namespace

std::string_view to_string(LinkState s) noexcept { return s == LinkState::up ? "UP" : "DOWN"; }

std::string internet_link(std::string_view facility_id) {
  return std::string(kInternetPrefix) + std::string(facility_id);
}

std::string ussd_link(std::string_view msisdn) {
  return std::string(kUssdPrefix) + std::string(msisdn);
}

// ------------------------------------------------------------------ schedule

LinkSchedule::LinkSchedule(std::string id, Millis horizon, LinkState initial, Millis base_latency_ms,
                           std::uint64_t jitter_seed, Millis jitter_ms)
    : id_(std::move(id)),
      horizon_(std::max<Millis>(horizon, 1)),
      intervals_{Interval{0, horizon_, initial}},
      base_latency_ms_(base_latency_ms),
      jitter_seed_(jitter_seed),
      jitter_ms_(jitter_ms) {}

Status LinkSchedule::set_intervals(std::vector<Interval> intervals) {
  if (intervals.empty()) return make_error(Errc::validation, id_ + ": no intervals");
  Millis expect = 0;
  for (const auto& iv : intervals) {
    if (iv.from_ms != expect || iv.to_ms <= iv.from_ms) {
      return make_error(Errc::validation, id_ + ": intervals must be ascending and contiguous from 0");
    }
    expect = iv.to_ms;
  }
  if (expect < horizon_) return make_error(Errc::validation, id_ + ": intervals must cover the horizon");
  intervals_ = std::move(intervals);
  return Ok{};
}

void LinkSchedule::set_from(Millis at, LinkState state) {
  at = std::max<Millis>(at, 0);
  std::vector<Interval> kept;
  for (auto iv : intervals_) {
    if (iv.from_ms >= at) break;
    iv.to_ms = std::min(iv.to_ms, at);
    kept.push_back(iv);
  }
  const Millis end = std::max(horizon_, at + 1);
  if (!kept.empty() && kept.back().state == state) {
    kept.back().to_ms = end;
  } else {
    kept.push_back(Interval{at, end, state});
  }
  intervals_ = std::move(kept);
}

LinkState LinkSchedule::state_at(Millis t) const {
  for (const auto& iv : intervals_) {
    if (t < iv.to_ms) return iv.state;
  }
  return intervals_.back().state;
}

std::vector<Millis> LinkSchedule::up_transitions() const {
  std::vector<Millis> out;
  for (std::size_t i = 1; i < intervals_.size(); ++i) {
    if (intervals_[i - 1].state == LinkState::down && intervals_[i].state == LinkState::up) {
      out.push_back(intervals_[i].from_ms);
    }
  }
  return out;
}

// ------------------------------------------------------------------ world

World::World(WorldConfig config)
    : config_(std::move(config)),
      central_(core::StoreOptions{"central", derive_seed(config_.seed, "central")}, &audit_),
      auth_(audit_, auth::AuthPolicy{}, derive_seed(config_.seed, "auth")),
      service_(central_, auth_, audit_),
      gateway_(service_, config_.gateway) {
  add_link(LinkSchedule(std::string(kGatewayUplink), config_.horizon_ms, LinkState::up,
                        config_.default_latency_ms));
  gateway_.set_uplink([this](Millis t) {
    auto s = link_state(kGatewayUplink, t - config_.epoch_ms);
    return s && *s == LinkState::up;
  });
}

void World::add_link(LinkSchedule schedule) {
  const std::string id = schedule.id();
  jitter_rng_.insert_or_assign(id, std::mt19937_64(derive_seed(config_.seed ^ schedule.jitter_seed(), id)));
  links_.insert_or_assign(id, std::move(schedule));
}

LinkSchedule* World::link(std::string_view id) {
  auto it = links_.find(id);
  return it == links_.end() ? nullptr : &it->second;
}

Result<LinkState> World::link_state(std::string_view id, Millis t) const {
  auto it = links_.find(id);
  if (it == links_.end()) return make_error(Errc::unknown_link, std::string(id));
  if (id.substr(0, kInternetPrefix.size()) == kInternetPrefix &&
      !powered(id.substr(kInternetPrefix.size()))) {
    return LinkState::down;
  }
  return it->second.state_at(t);
}

Millis World::jitter(const LinkSchedule& link) {
  if (link.jitter_ms() <= 0) return 0;
  auto& rng = jitter_rng_.at(link.id());
  return static_cast<Millis>(rng() % static_cast<std::uint64_t>(link.jitter_ms() + 1));
}

Result<Delivery> World::deliver(std::string_view message, std::string_view link_id, Millis at) {
  auto state = link_state(link_id, at);
  if (!state) return state.error();
  Delivery d;
  ordered_json line;
  line["t"] = at;
  line["ev"] = "deliver";
  line["link"] = std::string(link_id);
  line["msg"] = std::string(message);
  if (*state == LinkState::up) {
    const auto& schedule = links_.at(std::string(link_id));
    d.delivered = true;
    d.at = at + schedule.base_latency_ms() + jitter(schedule);
    line["outcome"] = "DELIVERED";
    line["at"] = d.at;
  } else {
    line["outcome"] = "DROPPED";
  }
  record(std::move(line));
  return d;
}

Status World::set_link(std::string_view id, LinkState state) {
  LinkSchedule* l = link(id);
  if (!l) return make_error(Errc::unknown_link, std::string(id));
  const LinkState before = l->state_at(now_);
  l->set_from(now_, state);
  record(ordered_json{{"t", now_}, {"ev", "link"}, {"link", std::string(id)},
                      {"state", std::string(to_string(state))}});
  if (config_.sync_on_link_up && before == LinkState::down && state == LinkState::up &&
      id.substr(0, kInternetPrefix.size()) == kInternetPrefix) {
    std::string fac(id.substr(kInternetPrefix.size()));
    schedule(now_, [fac](World& w) { (void)w.sync_facility(fac); });
  }
  return Ok{};
}

void World::schedule(Millis at, Action action) {
  queue_.emplace(std::pair{std::max(at, now_), next_seq_++}, std::move(action));
}

void World::advance(Millis to_ms) {
  while (!queue_.empty() && queue_.begin()->first.first <= to_ms) {
    auto node = queue_.extract(queue_.begin());
    now_ = std::max(now_, node.key().first);
    node.mapped()(*this);
  }
  now_ = std::max(now_, to_ms);
}

sync::Replica& World::add_replica(const std::string& facility_id) {
  auto& f = facilities_[facility_id];
  if (!f.replica) {
    f.replica = std::make_unique<sync::Replica>(facility_id, derive_seed(config_.seed, facility_id),
                                                nullptr);
    const std::string id = internet_link(facility_id);
    if (!links_.count(id)) {
      add_link(LinkSchedule(id, config_.horizon_ms, LinkState::up, config_.default_latency_ms));
    }
  }
  return *f.replica;
}

sync::Replica* World::replica(std::string_view facility_id) {
  auto it = facilities_.find(facility_id);
  return it == facilities_.end() ? nullptr : it->second.replica.get();
}

std::vector<std::string> World::facilities() const {
  std::vector<std::string> out;
  for (const auto& [id, f] : facilities_) out.push_back(id);
  return out;
}

Status World::provision_replicas() {
  sync::LocalTransport local(central_);
  for (auto& [id, f] : facilities_) {
    auto r = sync::sync_round(*f.replica, local, wall(now_));
    if (!r) return r.error();
  }
  record(ordered_json{{"t", now_}, {"ev", "provision"}, {"facilities", facilities()},
                      {"central_log", central_.log_size()}});
  return Ok{};
}

void World::arm_auto_sync() {
  if (config_.sync_on_link_up) {
    for (const auto& [id, f] : facilities_) {
      auto* l = link(internet_link(id));
      if (!l) continue;
      for (Millis t : l->up_transitions()) {
        if (t < now_) continue;
        std::string fac = id;
        schedule(t, [fac](World& w) { (void)w.sync_facility(fac); });
      }
    }
  }
  if (config_.sync_interval_ms > 0) periodic_sync(now_ + config_.sync_interval_ms);
}

void World::periodic_sync(Millis at) {
  if (at > config_.horizon_ms) return;
  schedule(at, [at](World& w) {
    for (const auto& fac : w.facilities()) (void)w.sync_facility(fac);
    w.periodic_sync(at + w.config().sync_interval_ms);
  });
}

Result<sync::ChangeEvent> World::write(std::string_view at, std::string_view actor,
                                       const core::Mutation& m) {
  Result<sync::ChangeEvent> r = make_error(Errc::unknown_facility, std::string(at));
  if (at == "central") {
    r = central_.apply(actor, m, wall(now_));
  } else if (auto* rep = replica(at)) {
    if (!powered(at)) {
      r = make_error(Errc::link_down, "facility " + std::string(at) + " has no power");
    } else {
      r = rep->local_apply(actor, m, wall(now_));
    }
  }
  ordered_json line;
  line["t"] = now_;
  line["ev"] = "write";
  line["at"] = std::string(at);
  line["actor"] = std::string(actor);
  line["op"] = std::string(core::mutation_name(m));
  line["outcome"] = std::string(errc_or_ok(r ? nullptr : &r.error()));
  if (r) line["entity"] = std::string(sync::kind_name(r->entity_kind)) + "/" + r->entity_id;
  record(std::move(line));
  return r;
}

Result<sync::SyncReport> World::sync_facility(std::string_view facility_id) {
  auto* rep = replica(facility_id);
  Result<sync::SyncReport> r = make_error(Errc::unknown_facility, std::string(facility_id));
  if (rep && !powered(facility_id)) {
    r = make_error(Errc::link_down, "facility has no power");
  } else if (rep) {
    SimTransport transport(*this, internet_link(facility_id));
    r = sync::sync_round(*rep, transport, wall(now_));
  }
  ordered_json line;
  line["t"] = now_;
  line["ev"] = "sync";
  line["facility"] = std::string(facility_id);
  line["outcome"] = std::string(errc_or_ok(r ? nullptr : &r.error()));
  if (r) {
    line["pushed"] = r->pushed;
    line["pulled"] = r->pulled;
    line["cursor"] = r->new_cursor;
  }
  record(std::move(line));
  return r;
}

void World::power_cut(const std::string& facility_id, Millis duration_ms) {
  auto it = facilities_.find(facility_id);
  if (it == facilities_.end()) return;
  const Millis back = now_ + std::max<Millis>(duration_ms, 0);
  it->second.power_back_at = back;
  record(ordered_json{{"t", now_}, {"ev", "power"}, {"facility", facility_id}, {"state", "OFF"},
                      {"until", back}});
  schedule(back, [facility_id, back](World& w) {
    auto f = w.facilities_.find(facility_id);
    if (f == w.facilities_.end() || f->second.power_back_at != back) return;
    f->second.power_back_at.reset();
    f->second.replica->power_cycle();
    w.record(ordered_json{{"t", w.now_}, {"ev", "power"}, {"facility", facility_id}, {"state", "ON"},
                          {"log", f->second.replica->store().log_size()}});
    const auto* l = w.link(internet_link(facility_id));
    if (w.config_.sync_on_link_up && l && l->state_at(w.now_) == LinkState::up) {
      (void)w.sync_facility(facility_id);
    }
  });
}

bool World::powered(std::string_view facility_id) const {
  auto it = facilities_.find(facility_id);
  return it == facilities_.end() || !it->second.power_back_at;
}

std::optional<ussd::UssdPdu> World::ussd_send(const std::string& session_id,
                                              const std::string& msisdn, ussd::PduKind kind,
                                              const std::string& text) {
  const std::string link_id = ussd_link(msisdn);
  if (!link(link_id)) {
    add_link(LinkSchedule(link_id, config_.horizon_ms, LinkState::up, config_.default_latency_ms));
  }
  auto& phone = phones_[session_id];
  phone.msisdn = msisdn;
  if (kind == ussd::PduKind::begin) phone = PhoneSession{msisdn, 0, 0, {}, false};

  record(ordered_json{{"t", now_}, {"ev", "ussd"}, {"session", session_id}, {"msisdn", msisdn},
                      {"kind", std::string(ussd::kind_name(kind))}, {"text", text}});
  const ussd::UssdPdu request{session_id, msisdn, kind, text};

  auto abort = [&](Millis at) {
    gateway_.handle_pdu(ussd::UssdPdu{session_id, msisdn, ussd::PduKind::abort, ""}, wall(at));
    phone.closed = true;
    record(ordered_json{{"t", at}, {"ev", "ussd_abort"}, {"session", session_id}});
    return std::nullopt;
  };

  auto up = deliver("ussd." + std::string(ussd::kind_name(kind)), link_id, now_);
  if (!up || !up->delivered) return abort(now_);
  gateway_.expire_sessions(wall(up->at));
  ussd::UssdPdu response = gateway_.handle_pdu(request, wall(up->at));
  auto down = deliver("ussd.reply", link_id, up->at);
  if (!down || !down->delivered) return abort(up->at);

  ++phone.exchanges;
  phone.max_chars = std::max(phone.max_chars, utf8::length(response.text));
  phone.last_text = response.text;
  phone.closed = response.kind == ussd::PduKind::end;
  record(ordered_json{{"t", down->at}, {"ev", "ussd_reply"}, {"session", session_id},
                      {"kind", std::string(ussd::kind_name(response.kind))}, {"text", response.text}});
  return response;
}

const PhoneSession* World::phone_session(std::string_view session_id) const {
  auto it = phones_.find(session_id);
  return it == phones_.end() ? nullptr : &it->second;
}

bool World::converged() const {
  const auto reference = central_.view_snapshot();
  for (const auto& [id, f] : facilities_) {
    if (!(f.replica->store().view_snapshot() == reference)) return false;
  }
  return true;
}

void World::record(ordered_json line) {
  trace_.push_back(line.dump(-1, ' ', false, ordered_json::error_handler_t::replace));
}

std::string World::trace_text() const {
  std::string out;
  for (const auto& l : trace_) {
    out += l;
    out += '\n';
  }
  return out;
}

}  // namespace ehr::netsim
