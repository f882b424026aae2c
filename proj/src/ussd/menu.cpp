#include "ehr/ussd/menu.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <set>
#include <sstream>

#include "ehr/common/utf8.hpp"
#include "ehr/default_menu.hpp"
#include "ehr/ussd/pdu.hpp"

namespace ehr::ussd {
namespace {

using nlohmann::json;

constexpr std::size_t kLineOverhead = 3;  // "\n" + digit + " "
constexpr std::size_t kFooterChars = 7;   // "\n0 Back" or "\n9 Next"

constexpr std::array<CommandBinding, 7> kBindings{{
    {"select_patient", "get_patient", false},
    {"patient_history", "patient_history", false},
    {"prescriptions", "patient_history", false},
    {"request_refill", "request_refill", true},
    {"record_observation", "record_encounter", true},
    {"record_note", "record_encounter", true},
    {"refill_inbox", "pending_refills", false},
}};

Error load_error(std::string detail) { return make_error(Errc::invalid_config, std::move(detail)); }

Result<std::string> string_field(const json& obj, const char* key, bool required = true) {
  auto it = obj.find(key);
  if (it == obj.end()) {
    if (required) return load_error(std::string("missing \"") + key + "\"");
    return std::string{};
  }
  if (!it->is_string()) return load_error(std::string("\"") + key + "\" must be a string");
  return it->get<std::string>();
}

Result<MenuItem> parse_item(const json& doc) {
  if (!doc.is_object()) return load_error("menu item must be an object");
  auto label = string_field(doc, "label");
  if (!label) return label.error();
  if (label->empty()) return load_error("empty item label");
  auto action = string_field(doc, "action");
  if (!action) return action.error();

  MenuItem item;
  item.label = *label;
  if (*action == "navigate") {
    auto target = string_field(doc, "target");
    if (!target) return target.error();
    item.action = Navigate{*target};
  } else if (*action == "prompt") {
    PromptSpec spec;
    for (auto [key, out] : {std::pair{"field", &spec.field}, std::pair{"prompt", &spec.prompt},
                            std::pair{"command", &spec.command}}) {
      auto v = string_field(doc, key);
      if (!v) return v.error();
      if (v->empty()) return load_error(std::string("empty \"") + key + "\"");
      *out = *v;
    }
    auto next = string_field(doc, "next", false);
    if (!next) return next.error();
    spec.next = *next;
    item.action = Prompt{std::move(spec)};
  } else if (*action == "command") {
    auto command = string_field(doc, "command");
    if (!command) return command.error();
    item.action = Command{*command, {}};
  } else if (*action == "end") {
    auto message = string_field(doc, "message");
    if (!message) return message.error();
    if (utf8::length(*message) > kMaxUssdChars) return load_error("end message over budget");
    item.action = EndDialog{*message};
  } else {
    return load_error("unknown action \"" + *action + "\"");
  }
  return item;
}

std::string substitute(std::string_view tmpl, const std::map<std::string, std::string>& context) {
  std::string out;
  std::size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl[i] == '{') {
      auto close = tmpl.find('}', i + 1);
      if (close != std::string_view::npos) {
        auto it = context.find(std::string(tmpl.substr(i + 1, close - i - 1)));
        if (it != context.end()) out += it->second;
        i = close + 1;
        continue;
      }
    }
    out += tmpl[i++];
  }
  return out;
}

// Title as shown: short for item screens, up to the whole page for detail text.
std::string effective_title(const Screen& screen) {
  std::size_t cap = screen.items.empty() ? kMaxUssdChars - kFooterChars : kMaxTitleChars;
  return utf8::ellipsize(screen.title, cap);
}

std::size_t header_chars(const Screen& screen) {
  return std::max(utf8::length(effective_title(screen)), kNoticeReserve);
}

std::size_t label_allowance(const Screen& screen) {
  std::size_t fixed = header_chars(screen) + 2 * kFooterChars + kLineOverhead;
  return fixed >= kMaxUssdChars ? 1 : kMaxUssdChars - fixed;
}

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

std::string_view kind_word(core::EncounterKind k) {
  switch (k) {
    case core::EncounterKind::visit: return "Visit";
    case core::EncounterKind::observation: return "Obs";
    case core::EncounterKind::note: return "Note";
  }
  return "Visit";
}

std::string day(Millis t) { return format_date(date_of(t)); }

std::string entry_label(const core::HistoryEntry& entry) {
  if (const auto* e = std::get_if<core::Encounter>(&entry)) {
    std::string label = day(e->occurred_at) + " " + std::string(kind_word(e->kind));
    if (e->kind == core::EncounterKind::visit && !e->diagnosis_codes.empty()) {
      label += " " + join(e->diagnosis_codes, ",");
    } else if (!e->note.empty()) {
      label += " " + e->note;
    }
    return label;
  }
  const auto& rx = std::get<core::Prescription>(entry);
  return day(rx.prescribed_at) + " Rx " + rx.drug_code + " " + rx.dose;
}

std::string rx_detail(const core::Prescription& rx) {
  std::ostringstream out;
  out << rx.drug_code << " " << rx.dose << "\nStatus: " << core::to_string(rx.status)
      << "\nRefills left: " << rx.refills_remaining << "\nSince " << day(rx.prescribed_at);
  return out.str();
}

std::string entry_detail(const core::HistoryEntry& entry) {
  if (const auto* e = std::get_if<core::Encounter>(&entry)) {
    std::string text = day(e->occurred_at) + " " + std::string(kind_word(e->kind)) + " at " +
                       e->facility_id;
    if (!e->diagnosis_codes.empty()) text += "\nCodes: " + join(e->diagnosis_codes, ",");
    if (!e->note.empty()) text += "\n" + e->note;
    return text;
  }
  return rx_detail(std::get<core::Prescription>(entry));
}

bool refillable(const core::Prescription& rx) {
  return rx.status == core::RxStatus::active && rx.refills_remaining > 0;
}

}  // namespace

// ---------------------------------------------------------------- tree

Result<MenuTree> MenuTree::from_json(const json& doc) {
  if (!doc.is_object()) return load_error("menu document must be an object");
  auto root = string_field(doc, "root");
  if (!root) return root.error();
  auto nodes_it = doc.find("nodes");
  if (nodes_it == doc.end() || !nodes_it->is_array() || nodes_it->empty()) {
    return load_error("\"nodes\" must be a non-empty array");
  }

  MenuTree tree;
  tree.root_ = *root;
  std::set<std::string> ids;
  for (const auto& n : *nodes_it) {
    if (!n.is_object()) return load_error("menu node must be an object");
    MenuNode node;
    auto id = string_field(n, "id");
    if (!id) return id.error();
    if (id->empty()) return load_error("empty node id");
    auto title = string_field(n, "title");
    if (!title) return title.error();
    if (utf8::length(*title) > kMaxTitleChars) return load_error("title too long in node " + *id);
    node.id = *id;
    node.title = *title;
    auto items = n.find("items");
    if (items == n.end() || !items->is_array() || items->empty()) {
      return load_error("node " + *id + " needs a non-empty \"items\" array");
    }
    for (const auto& i : *items) {
      auto item = parse_item(i);
      if (!item) return make_error(Errc::invalid_config, "node " + *id + ": " + item.error().detail);
      node.items.push_back(std::move(*item));
    }
    if (!ids.insert(node.id).second) return load_error("duplicate node id " + node.id);
    tree.nodes_.push_back(std::move(node));
  }
  if (!ids.count(tree.root_)) return load_error("root node " + tree.root_ + " not defined");

  // Targets and commands resolve; collect edges for reachability.
  std::map<std::string, std::vector<std::string>> edges;
  for (const auto& node : tree.nodes_) {
    for (const auto& item : node.items) {
      std::string target;
      std::string command;
      if (const auto* nav = std::get_if<Navigate>(&item.action)) target = nav->target;
      if (const auto* p = std::get_if<Prompt>(&item.action)) {
        target = p->spec.next;
        command = p->spec.command;
      }
      if (const auto* c = std::get_if<Command>(&item.action)) command = c->name;
      if (!target.empty()) {
        if (!ids.count(target)) return load_error("unknown target " + target + " in node " + node.id);
        edges[node.id].push_back(target);
      }
      if (!command.empty() && !find_binding(command)) {
        return load_error("unknown command " + command + " in node " + node.id);
      }
    }
  }
  std::set<std::string> seen{tree.root_};
  std::vector<std::string> todo{tree.root_};
  while (!todo.empty()) {
    auto cur = todo.back();
    todo.pop_back();
    for (const auto& t : edges[cur]) {
      if (seen.insert(t).second) todo.push_back(t);
    }
  }
  for (const auto& id : ids) {
    if (!seen.count(id)) return load_error("node " + id + " unreachable from root");
  }
  return tree;
}

Result<MenuTree> MenuTree::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) return make_error(Errc::io_error, "cannot open " + path.string());
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded()) return load_error("menu file is not valid JSON: " + path.string());
  return from_json(doc);
}

const MenuTree& MenuTree::shipped() {
  static const MenuTree tree = [] {
    auto parsed = from_json(json::parse(generated::kDefaultMenuJson));
    return std::move(parsed).value();
  }();
  return tree;
}

const MenuNode* MenuTree::node(std::string_view id) const {
  for (const auto& n : nodes_) {
    if (n.id == id) return &n;
  }
  return nullptr;
}

// ---------------------------------------------------------------- rendering

std::vector<PageRange> paginate(const Screen& screen) {
  std::vector<PageRange> pages;
  const std::size_t header = header_chars(screen);
  const std::size_t n = screen.items.size();
  std::size_t i = 0;
  do {
    PageRange page{i, 0};
    std::size_t used = header + kFooterChars;
    while (i < n && page.count < kMaxItemsPerPage) {
      std::size_t line = kLineOverhead + utf8::length(fitted_label(screen, screen.items[i].label));
      std::size_t need = used + line + (i + 1 < n ? kFooterChars : 0);
      if (page.count > 0 && need > kMaxUssdChars) break;
      used += line;
      ++page.count;
      ++i;
    }
    pages.push_back(page);
  } while (i < n);
  return pages;
}

std::string fitted_label(const Screen& screen, std::string_view label) {
  return utf8::ellipsize(label, label_allowance(screen));
}

Result<std::string> render_screen(const Screen& screen, std::size_t page, std::string_view notice) {
  auto pages = paginate(screen);
  if (page >= pages.size()) {
    return make_error(Errc::page_out_of_range,
                      "page " + std::to_string(page) + " of " + std::to_string(pages.size()));
  }
  std::string text = notice.empty() ? effective_title(screen)
                                    : utf8::ellipsize(notice, header_chars(screen));
  const auto& range = pages[page];
  for (std::size_t k = 0; k < range.count; ++k) {
    text += "\n" + std::to_string(k + 1) + " " +
            fitted_label(screen, screen.items[range.first + k].label);
  }
  text += "\n";
  text += kBackLine;
  if (page + 1 < pages.size()) {
    text += "\n";
    text += kNextLine;
  }
  return text;
}

std::string render_prompt(const PromptSpec& prompt, std::string_view notice) {
  std::string text;
  if (!notice.empty()) text = utf8::ellipsize(notice, kNoticeReserve) + "\n";
  return text + utf8::ellipsize(prompt.prompt, kMaxUssdChars - kNoticeReserve - 1);
}

std::span<const CommandBinding> command_bindings() noexcept { return kBindings; }

const CommandBinding* find_binding(std::string_view command) noexcept {
  for (const auto& b : kBindings) {
    if (b.command == command) return &b;
  }
  return nullptr;
}

std::string_view notice_for(Errc code) noexcept {
  switch (code) {
    case Errc::not_found:
    case Errc::unknown_patient: return "Patient not found.";
    case Errc::unknown_rx: return "Rx not found.";
    case Errc::forbidden:
    case Errc::expired_token:
    case Errc::unknown_principal: return "Not permitted.";
    case Errc::no_refills_left: return "No refills left.";
    case Errc::not_active: return "Rx not active.";
    case Errc::link_down:
    case Errc::partial:
    case Errc::io_error: return "Service unavailable.";
    case Errc::validation: return "Invalid input.";
    default: return "Request failed.";
  }
}

// ---------------------------------------------------------------- engine

Screen MenuEngine::instantiate(const MenuNode& node, const MenuState& state) const {
  return Screen{utf8::ellipsize(substitute(node.title, state.context), kMaxTitleChars), node.items};
}

MenuState MenuEngine::start() const {
  MenuState state;
  const MenuNode* root = tree_.node(tree_.root());
  state.stack.push_back(Frame{root->id, instantiate(*root, state), 0});
  return state;
}

std::string MenuEngine::current_screen(const MenuState& state, std::string_view notice) const {
  if (state.mode == MenuMode::prompt && state.pending) return render_prompt(*state.pending, notice);
  const Frame& top = state.stack.back();
  auto text = render_screen(top.screen, top.page, notice);
  if (text) return *text;
  return render_screen(top.screen, 0, notice).value();
}

StepResult MenuEngine::stay(const MenuState& state, std::string_view notice) const {
  return StepResult{current_screen(state, notice), false, std::nullopt};
}

StepResult MenuEngine::push(MenuState& state, Frame frame) const {
  state.stack.push_back(std::move(frame));
  state.mode = MenuMode::menu;
  state.pending.reset();
  return stay(state, {});
}

StepResult MenuEngine::step(MenuState& state, std::string_view raw, EhrPort& port) const {
  if (state.mode == MenuMode::done || state.stack.empty()) {
    state.mode = MenuMode::done;
    return StepResult{"Session ended.", true, std::nullopt};
  }
  const std::string input = trim(raw);

  if (state.mode == MenuMode::prompt) {
    if (input == "0") {
      state.mode = MenuMode::menu;
      state.pending.reset();
      return stay(state, {});
    }
    if (input.empty()) return stay(state, "Input required.");
    PromptSpec spec = *state.pending;
    state.context[spec.field] = input;
    return run_command(state, spec.command, input, &spec, port);
  }

  Frame& top = state.stack.back();
  if (input == "0") {
    if (state.stack.size() == 1) {
      state.mode = MenuMode::done;
      return StepResult{"Goodbye.", true, std::nullopt};
    }
    state.stack.pop_back();
    return stay(state, {});
  }
  const auto pages = paginate(top.screen);
  if (input == "9") {
    if (top.page + 1 >= pages.size()) return stay(state, "No more items.");
    ++top.page;
    return stay(state, {});
  }
  if (input.size() == 1 && input[0] >= '1' && input[0] <= '8') {
    std::size_t k = static_cast<std::size_t>(input[0] - '1');
    const PageRange& range = pages[std::min(top.page, pages.size() - 1)];
    if (k < range.count) {
      MenuItem item = top.screen.items[range.first + k];
      return select(state, item, port);
    }
  }
  return stay(state, "Invalid choice.");
}

StepResult MenuEngine::select(MenuState& state, const MenuItem& item, EhrPort& port) const {
  return std::visit(
      [&](const auto& action) -> StepResult {
        using A = std::decay_t<decltype(action)>;
        if constexpr (std::is_same_v<A, Navigate>) {
          const MenuNode* node = tree_.node(action.target);
          if (!node) return stay(state, "Invalid choice.");
          return push(state, Frame{node->id, instantiate(*node, state), 0});
        } else if constexpr (std::is_same_v<A, Prompt>) {
          state.mode = MenuMode::prompt;
          state.pending = action.spec;
          return stay(state, {});
        } else if constexpr (std::is_same_v<A, Command>) {
          return run_command(state, action.name, action.arg, nullptr, port);
        } else if constexpr (std::is_same_v<A, EndDialog>) {
          state.mode = MenuMode::done;
          return StepResult{action.message, true, std::nullopt};
        } else {
          return push(state, Frame{{}, Screen{action.text, {}}, 0});
        }
      },
      item.action);
}

StepResult MenuEngine::run_command(MenuState& state, const std::string& command,
                                   std::string_view arg, const PromptSpec* prompt,
                                   EhrPort& port) const {
  // Failures leave the dialogue where it was, with a notice.
  auto fail = [&](std::string_view notice) {
    StepResult r = stay(state, notice);
    r.command = command;
    return r;
  };
  auto done = [&](StepResult r) {
    r.command = command;
    return r;
  };
  auto leave_prompt = [&] {
    state.mode = MenuMode::menu;
    state.pending.reset();
  };
  auto patient = state.context.find("patient_id");
  const bool needs_patient = command != "select_patient" && command != "refill_inbox";
  if (needs_patient && patient == state.context.end()) {
    leave_prompt();
    return fail("Select a patient first.");
  }

  if (command == "select_patient") {
    auto rec = port.get_patient(arg);
    if (!rec) return fail(notice_for(rec.code()));
    state.context["patient_id"] = rec->patient_id;
    state.context["patient_name"] = rec->name;
    leave_prompt();
    if (prompt && !prompt->next.empty()) {
      const MenuNode* node = tree_.node(prompt->next);
      return done(push(state, Frame{node->id, instantiate(*node, state), 0}));
    }
    return done(stay(state, "Patient selected."));
  }

  if (command == "patient_history" || command == "prescriptions") {
    auto history = port.patient_history(patient->second);
    if (!history) return fail(notice_for(history.code()));
    Screen screen;
    for (const auto& entry : *history) {
      if (command == "prescriptions" && !std::holds_alternative<core::Prescription>(entry)) continue;
      screen.items.push_back(MenuItem{entry_label(entry), ShowText{entry_detail(entry)}});
    }
    if (screen.items.empty()) {
      return fail(command == "prescriptions" ? "No prescriptions." : "No history.");
    }
    screen.title = (command == "prescriptions" ? "Prescriptions (" : "History (") +
                   std::to_string(screen.items.size()) + ")";
    return done(push(state, Frame{{}, std::move(screen), 0}));
  }

  if (command == "request_refill") {
    if (arg.empty()) {
      auto history = port.patient_history(patient->second);
      if (!history) return fail(notice_for(history.code()));
      std::vector<core::Prescription> candidates;
      for (const auto& entry : *history) {
        if (const auto* rx = std::get_if<core::Prescription>(&entry); rx && refillable(*rx)) {
          candidates.push_back(*rx);
        }
      }
      if (candidates.empty()) return fail("No refillable Rx.");
      if (candidates.size() > 1) {
        Screen screen{"Refill which Rx?", {}};
        for (const auto& rx : candidates) {
          screen.items.push_back(MenuItem{rx.drug_code + " " + rx.dose + " (" +
                                              std::to_string(rx.refills_remaining) + " left)",
                                          Command{"request_refill", rx.rx_id}});
        }
        return done(push(state, Frame{{}, std::move(screen), 0}));
      }
      arg = candidates.front().rx_id;
      auto req = port.request_refill(arg);
      if (!req) return fail(notice_for(req.code()));
    } else {
      auto req = port.request_refill(arg);
      if (!req) return fail(notice_for(req.code()));
    }
    state.mode = MenuMode::done;
    return done(StepResult{"Refill requested.", true, std::nullopt});
  }

  if (command == "record_observation" || command == "record_note") {
    const bool obs = command == "record_observation";
    auto id = port.record_encounter(
        patient->second, obs ? core::EncounterKind::observation : core::EncounterKind::note, arg);
    if (!id) {
      if (id.code() == Errc::validation) return fail(obs ? "Use KEY=VALUE." : "Invalid input.");
      return fail(notice_for(id.code()));
    }
    leave_prompt();
    return done(stay(state, obs ? "Observation recorded." : "Note recorded."));
  }

  if (command == "refill_inbox") {
    auto pending = port.pending_refills();
    if (!pending) return fail(notice_for(pending.code()));
    if (pending->empty()) return fail("Inbox empty.");
    Screen screen{"Refill inbox (" + std::to_string(pending->size()) + ")", {}};
    for (const auto& rx : *pending) {
      screen.items.push_back(MenuItem{rx.patient_id + " " + rx.drug_code + " " + rx.dose,
                                      ShowText{"Patient " + rx.patient_id + "\n" + rx_detail(rx)}});
    }
    return done(push(state, Frame{{}, std::move(screen), 0}));
  }

  return fail("Request failed.");
}

}  // namespace ehr::ussd
