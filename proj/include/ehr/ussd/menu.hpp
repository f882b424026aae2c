#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "ehr/common/result.hpp"
#include "ehr/core/types.hpp"

namespace ehr::ussd {

inline constexpr std::size_t kMaxItemsPerPage = 8;
/// Header budget reserved on every page so a one-line notice can replace
/// the title without pushing the page over the USSD limit.
inline constexpr std::size_t kNoticeReserve = 24;
inline constexpr std::size_t kMaxTitleChars = 64;

inline constexpr std::string_view kBackLine = "0 Back";
inline constexpr std::string_view kNextLine = "9 Next";

struct PromptSpec {
  std::string field;
  std::string prompt;
  std::string command;
  std::string next;  // node pushed after a successful command, if any

  friend bool operator==(const PromptSpec&, const PromptSpec&) = default;
};

struct Navigate {
  std::string target;
  friend bool operator==(const Navigate&, const Navigate&) = default;
};
struct Prompt {
  PromptSpec spec;
  friend bool operator==(const Prompt&, const Prompt&) = default;
};
struct Command {
  std::string name;
  std::string arg;
  friend bool operator==(const Command&, const Command&) = default;
};
struct EndDialog {
  std::string message;
  friend bool operator==(const EndDialog&, const EndDialog&) = default;
};
/// Pushes a read-only detail screen.
struct ShowText {
  std::string text;
  friend bool operator==(const ShowText&, const ShowText&) = default;
};

using MenuAction = std::variant<Navigate, Prompt, Command, EndDialog, ShowText>;

struct MenuItem {
  std::string label;
  MenuAction action;
  friend bool operator==(const MenuItem&, const MenuItem&) = default;
};

struct MenuNode {
  std::string id;
  std::string title;  // may reference context values as {key}
  std::vector<MenuItem> items;
};

/// Menu tree loaded from a config document:
///   {"root": id, "nodes": [{"id", "title", "items": [{"label", "action", ...}]}]}
/// with actions "navigate" (target), "prompt" (field, prompt, command,
/// optional next), "command" (command) and "end" (message). Validated at
/// load: unique ids, resolvable targets, known commands, titles within
/// budget, every node reachable from the root.
class MenuTree {
 public:
  static Result<MenuTree> from_json(const nlohmann::json& doc);
  static Result<MenuTree> from_file(const std::filesystem::path& path);
  /// The tree shipped in config/menu.json.
  static const MenuTree& shipped();

  const MenuNode* node(std::string_view id) const;
  const std::string& root() const noexcept { return root_; }
  const std::vector<MenuNode>& nodes() const noexcept { return nodes_; }

 private:
  std::string root_;
  std::vector<MenuNode> nodes_;
};

/// A concrete screen: a node with its context applied, or a dynamic listing.
struct Screen {
  std::string title;
  std::vector<MenuItem> items;
  friend bool operator==(const Screen&, const Screen&) = default;
};

struct PageRange {
  std::size_t first = 0;
  std::size_t count = 0;
  friend bool operator==(const PageRange&, const PageRange&) = default;
};

/// Greedy page packing: each page takes as many items as fit under the
/// character budget (header, numbered lines, "0 Back" and, unless it is the
/// last page, "9 Next"), at most eight. Always at least one page.
std::vector<PageRange> paginate(const Screen& screen);

/// Label after shortening to the screen's per-line allowance.
std::string fitted_label(const Screen& screen, std::string_view label);

/// Header (title, or `notice` when given), numbered items "k label",
/// "0 Back" and, iff more pages follow, "9 Next", newline separated.
Result<std::string> render_screen(const Screen& screen, std::size_t page,
                                  std::string_view notice = {});

std::string render_prompt(const PromptSpec& prompt, std::string_view notice = {});

/// Maps each menu command to the single EHR operation it invokes.
struct CommandBinding {
  std::string_view command;
  std::string_view operation;
  bool writes;
};
std::span<const CommandBinding> command_bindings() noexcept;
const CommandBinding* find_binding(std::string_view command) noexcept;

/// EHR operations available to a menu session, already bound to the
/// session's identity.
class EhrPort {
 public:
  virtual ~EhrPort() = default;
  virtual Result<core::PatientRecord> get_patient(std::string_view patient_id) = 0;
  virtual Result<std::vector<core::HistoryEntry>> patient_history(std::string_view patient_id) = 0;
  virtual Result<core::RefillRequest> request_refill(std::string_view rx_id) = 0;
  virtual Result<std::string> record_encounter(std::string_view patient_id,
                                               core::EncounterKind kind, std::string_view text) = 0;
  virtual Result<std::vector<core::Prescription>> pending_refills() = 0;
};

struct Frame {
  std::string node_id;  // empty for dynamic screens
  Screen screen;
  std::size_t page = 0;
  friend bool operator==(const Frame&, const Frame&) = default;
};

enum class MenuMode { menu, prompt, done };

struct MenuState {
  std::vector<Frame> stack;
  std::optional<PromptSpec> pending;
  std::map<std::string, std::string> context;
  MenuMode mode = MenuMode::menu;

  friend bool operator==(const MenuState&, const MenuState&) = default;
};

struct StepResult {
  std::string text;
  bool end = false;
  std::optional<std::string> command;  // menu command that ran, if any
};

/// Interprets keypad input against a menu tree. Invalid input never fails:
/// it re-renders the current screen with a notice.
class MenuEngine {
 public:
  explicit MenuEngine(MenuTree tree) : tree_(std::move(tree)) {}

  MenuState start() const;
  std::string current_screen(const MenuState& state, std::string_view notice = {}) const;
  StepResult step(MenuState& state, std::string_view input, EhrPort& port) const;

  const MenuTree& tree() const noexcept { return tree_; }

 private:
  Screen instantiate(const MenuNode& node, const MenuState& state) const;
  StepResult select(MenuState& state, const MenuItem& item, EhrPort& port) const;
  StepResult run_command(MenuState& state, const std::string& command, std::string_view arg,
                         const PromptSpec* prompt, EhrPort& port) const;
  StepResult push(MenuState& state, Frame frame) const;
  StepResult stay(const MenuState& state, std::string_view notice) const;

  MenuTree tree_;
};

/// Short user-facing notice for an operation failure.
std::string_view notice_for(Errc code) noexcept;

}  // namespace ehr::ussd
