#pragma once

#include <deque>
#include <functional>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ehr/common/utf8.hpp"
#include "ehr/ussd/gateway.hpp"
#include "support/world_fixture.hpp"

namespace ehr::testing {

inline const std::string kLongName(100, 'N');

/// Central store with a patient whose history spans several pages, one with
/// no history, one with an overlong name, refillable and non-refillable
/// prescriptions, and a pending refill for the inbox.
struct MenuEnv {
  Central central;
  ussd::Gateway gateway{central.service};

  MenuEnv() {
    auto& s = central.store;
    s.register_patient("setup", patient("P-001", "Amina Juma"), kT0).value();
    s.register_patient("setup", patient("P-002", "Hassan Ally"), kT0).value();
    s.register_patient("setup", patient("P-LONG", kLongName), kT0).value();
    for (int i = 0; i < 20; ++i) {
      core::Encounter e;
      e.encounter_id = "E-" + std::to_string(i);
      e.patient_id = i % 5 == 4 ? "P-LONG" : "P-001";
      e.facility_id = "H1";
      e.clinician_id = "D1";
      e.occurred_at = kT0 - (20 - i) * kDay;
      e.diagnosis_codes = {"J06.9", "B54", "I10"};
      e.note = std::string(120, 'a' + static_cast<char>(i % 26));
      s.record_encounter("setup", e, kT0).value();
    }
    auto rx = [&](std::string id, std::string patient_id, int refills, std::string drug) {
      core::Prescription r;
      r.rx_id = std::move(id);
      r.patient_id = std::move(patient_id);
      r.prescriber_id = "D1";
      r.drug_code = std::move(drug);
      r.dose = "500mg three times daily after meals for ten days";
      r.refills_remaining = refills;
      s.add_prescription("setup", r, kT0).value();
    };
    rx("RX-1", "P-001", 2, "AMOX500");
    rx("RX-2", "P-001", 1, "PARACETAMOL-EXTENDED-RELEASE-1000");
    rx("RX-3", "P-001", 0, "MET500");
    rx("RX-4", "P-LONG", 1, "ALU");
    rx("RX-5", "P-002", 3, "AMLO5");
    s.request_refill("setup", "RX-5", kT0).value();
  }
};

struct DfsReport {
  std::size_t paths = 0;
  std::size_t states = 0;
  std::size_t screens = 0;
  std::size_t over_budget = 0;
  std::size_t internal_errors = 0;
  std::size_t max_chars = 0;
  std::size_t truncated = 0;  // states left unexpanded at the depth limit
  std::vector<std::string> problems;
};

/// Explores every keypad path from the root menu (after a successful PIN)
/// up to `max_depth` inputs, replaying each path in a fresh environment and
/// pruning states already seen.
inline DfsReport explore_menu(std::size_t max_depth) {
  static const std::vector<std::string> menu_inputs{"1", "2", "3", "4", "5", "6", "7", "8",
                                                    "9", "0", "",  "x", std::string(200, '7')};
  static const std::vector<std::string> prompt_inputs{"P-001",     "P-002",          "P-LONG",
                                                      "P-404",     "BP=120/80",      "Feeling better",
                                                      "0",         "",               std::string(200, 'z')};
  const std::string msisdn = "+255700000002";  // nurse N1
  DfsReport report;
  std::set<std::string> seen;
  std::deque<std::vector<std::string>> todo{{}};

  auto signature = [](const ussd::SessionInfo& s) {
    std::ostringstream out;
    out << ussd::to_string(s.state) << '|' << static_cast<int>(s.menu.mode) << '|';
    for (const auto& f : s.menu.stack) out << f.node_id << ':' << f.screen.title << ':' << f.page << '/';
    if (s.menu.pending) out << "?" << s.menu.pending->field;
    for (const auto& [k, v] : s.menu.context) out << '|' << k << '=' << v;
    return out.str();
  };

  while (!todo.empty()) {
    const auto path = todo.front();
    todo.pop_front();
    ++report.paths;
    MenuEnv env;
    Millis now = kT0;
    const std::string sid = "dfs";
    auto send = [&](ussd::PduKind kind, const std::string& text) {
      now += kSecond;
      ussd::UssdPdu reply;
      try {
        reply = env.gateway.handle_pdu({sid, msisdn, kind, text}, now);
      } catch (const std::exception& e) {
        ++report.internal_errors;
        report.problems.push_back("exception: " + std::string(e.what()));
        return ussd::UssdPdu{sid, msisdn, ussd::PduKind::end, ""};
      }
      ++report.screens;
      const std::size_t n = utf8::length(reply.text);
      report.max_chars = std::max(report.max_chars, n);
      if (n > ussd::kMaxUssdChars) {
        ++report.over_budget;
        report.problems.push_back("over budget (" + std::to_string(n) + "): " + reply.text);
      }
      const bool bad = (reply.kind == ussd::PduKind::cont && reply.text.empty()) ||
                       reply.text.find("Request failed.") != std::string::npos ||
                       reply.text.find("Select a patient first.") != std::string::npos ||
                       reply.text.find("Session ended.") != std::string::npos ||
                       reply.text == ussd::kSessionExpired;
      if (bad) {
        ++report.internal_errors;
        report.problems.push_back("internal error after input \"" + text + "\": " + reply.text);
      }
      return reply;
    };
    send(ussd::PduKind::begin, std::string(ussd::kDefaultShortcode));
    auto r = send(ussd::PduKind::cont, "2222");
    for (const auto& in : path) {
      if (r.kind == ussd::PduKind::end) break;
      r = send(ussd::PduKind::cont, in);
    }
    if (r.kind == ussd::PduKind::end) continue;
    auto info = env.gateway.session(sid);
    if (!info) continue;
    if (!seen.insert(signature(*info)).second) continue;
    ++report.states;
    if (path.size() >= max_depth) {
      ++report.truncated;
      continue;
    }
    const auto& alphabet = info->menu.mode == ussd::MenuMode::prompt ? prompt_inputs : menu_inputs;
    for (const auto& in : alphabet) {
      auto next = path;
      next.push_back(in);
      todo.push_back(std::move(next));
    }
  }
  return report;
}

}  // namespace ehr::testing
