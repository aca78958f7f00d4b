#include "perfcity/workload.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <random>
#include <sstream>
#include <unordered_map>

#include "json.hpp"

namespace perfcity {

std::optional<ScenarioKind> parse_scenario(std::string_view name) {
  if (name == "thread-leak") return ScenarioKind::ThreadLeak;
  if (name == "duty-cycle") return ScenarioKind::DutyCycle;
  if (name == "figure3") return ScenarioKind::Figure3;
  if (name == "refactor-before") return ScenarioKind::RefactorBefore;
  if (name == "refactor-after") return ScenarioKind::RefactorAfter;
  return std::nullopt;
}

std::string_view scenario_name(ScenarioKind kind) {
  switch (kind) {
    case ScenarioKind::ThreadLeak: return "thread-leak";
    case ScenarioKind::DutyCycle: return "duty-cycle";
    case ScenarioKind::Figure3: return "figure3";
    case ScenarioKind::RefactorBefore: return "refactor-before";
    case ScenarioKind::RefactorAfter: return "refactor-after";
  }
  return "?";
}

std::optional<Pace> parse_pace(std::string_view name) {
  if (name == "real") return Pace::Real;
  if (name == "fast") return Pace::Fast;
  return std::nullopt;
}

namespace {

struct ClassSpec {
  const char* package;  // dotted, before the refactoring
  const char* class_name;
  std::vector<const char*> methods;
};

// A small Tetris clone bundled with the ini4j configuration library.
const std::vector<ClassSpec>& tetris_classes() {
  static const std::vector<ClassSpec> classes = {
      {"org.ini4j", "Ini",
       {"add()", "get(String)", "getFile()", "load(File)", "put(String)", "remove(String)", "setFile(File)",
        "store(File)"}},
      {"org.ini4j", "Config",
       {"getGlobal()", "isEscape()", "isMultiOption()", "setEmptyOption(boolean)", "setFileEncoding()", "clone()"}},
      {"org.ini4j", "BasicProfile",
       {"add(String)", "get(String)", "getComment()", "put(String)", "remove(Object)", "resolve(String)", "size()"}},
      {"org.ini4j", "Wini", {"get(String,String)", "put(String,String,Object)", "getFile()", "load()"}},
      {"org.ini4j.spi", "IniParser",
       {"parse(InputStream)", "parseOptionLine(String)", "parseSectionLine(String)", "newInstance()",
        "setConfig(Config)"}},
      {"org.ini4j.spi", "IniBuilder",
       {"handleOption(String,String)", "startSection(String)", "endSection()", "newInstance()"}},
      {"org.ini4j.spi", "IniFormatter",
       {"handleOption(String,String)", "startSection(String)", "endSection()", "newInstance()"}},
      {"game", "Game", {"getScore()", "isGameOver()", "reset()", "start()", "update()", "getLevel()"}},
      {"game", "Board",
       {"clearLines()", "draw(Graphics)", "isValid(Piece)", "place(Piece)", "reset()", "tick()", "getCell(int,int)"}},
      {"game", "MainSinglePlayerThread", {"run()", "saveHighScore()", "quit()"}},
      {"game", "Main", {"main(String[])"}},
      {"game.pieces", "Piece", {"draw(Graphics)", "move(int)", "rotate()", "getShape()", "getX()", "getY()"}},
      {"game.pieces", "PieceFactory", {"next()", "reset()", "random()"}},
      {"game.pieces", "Rotation", {"apply(Piece)", "inverse()", "next()"}},
      {"gui", "GameWindow", {"init()", "repaint()", "setScene(JPanel)", "dispose()", "pack()"}},
      {"gui", "GraphicsPanel",
       {"paintComponent(Graphics)", "drawScore(Graphics)", "drawNext(Graphics)", "keyPressed(KeyEvent)", "update()"}},
      {"gui", "StartMenu", {"actionPerformed(ActionEvent)", "init()", "show()", "hide()"}},
      {"gui.menu", "MenuButton", {"click()", "paint(Graphics)", "setLabel(String)"}},
      {"gui.menu", "HighScoreMenu", {"init()", "load()", "render(Graphics)", "close()"}},
      {"gui.menu", "SettingsMenu", {"apply()", "init()", "render(Graphics)", "close()"}},
      {"highscore", "HighScore", {"compareTo(HighScore)", "getName()", "getScore()", "toString()"}},
      {"highscore", "HighScoreTable", {"add(HighScore)", "load()", "save()"}},
      {"settings", "Settings", {"get(String)", "load()", "save()", "set(String,String)"}},
      {"settings", "KeyBindings", {"handle(KeyEvent)", "load()", "lookup(int)"}},
  };
  return classes;
}

/// Deterministic draws built only on the raw mt19937_64 sequence, which the
/// standard pins down exactly (the distributions are implementation-defined).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}
  Micros between(Micros lo, Micros hi) {
    if (hi <= lo) return lo;
    return lo + static_cast<Micros>(gen_() % static_cast<std::uint64_t>(hi - lo + 1));
  }
  double unit() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }
  bool chance(double p) { return unit() < p; }

 private:
  std::mt19937_64 gen_;
};

struct CallSpec {
  const char* key;  // "Class.method"
  Micros min_micros;
  Micros max_micros;
  double probability;
  std::vector<CallSpec> children;
};

using MethodIndex = std::unordered_map<std::string, MethodId>;
using ThreadEvents = std::map<std::uint64_t, std::vector<TraceEvent>>;

MethodIndex index_methods(const std::vector<MethodDescriptor>& methods) {
  MethodIndex idx;
  for (const auto& m : methods) idx.emplace(m.class_name + "." + m.method_name, m.id);
  return idx;
}

/// Emits one invocation of `spec` starting at `start`, no longer than `budget`.
/// Returns the exit timestamp.
Micros emit_call(const CallSpec& spec, Micros start, Micros budget, const MethodIndex& idx, Rng& rng,
                 std::vector<TraceEvent>& out) {
  const MethodId id = idx.at(spec.key);
  const Micros duration = std::min(rng.between(spec.min_micros, spec.max_micros), budget);
  const Micros end = start + duration;
  out.push_back({start, id, Action::Enter});
  Micros cursor = start + 1 + rng.between(0, 50);
  for (const auto& child : spec.children) {
    if (!rng.chance(child.probability)) continue;
    const Micros room = end - cursor - 1;
    if (room < child.min_micros) continue;
    cursor = emit_call(child, cursor, room, idx, rng, out) + 1 + rng.between(0, 50);
  }
  out.push_back({end, id, Action::Exit});
  return end;
}

const std::vector<CallSpec>& game_frame() {
  static const std::vector<CallSpec> frame = {
      {"Game.update()", 3000, 8000, 1.0,
       {{"Board.tick()", 1000, 4000, 1.0,
         {{"Piece.move(int)", 200, 800, 0.8, {}},
          {"Board.isValid(Piece)", 100, 400, 0.8, {}},
          {"Board.clearLines()", 300, 1500, 0.1, {}}}},
        {"Game.getScore()", 50, 150, 0.5, {}}}},
      {"GraphicsPanel.paintComponent(Graphics)", 3000, 9000, 1.0,
       {{"Board.draw(Graphics)", 1000, 3000, 1.0, {}},
        {"Piece.draw(Graphics)", 300, 900, 1.0, {}},
        {"GraphicsPanel.drawScore(Graphics)", 100, 300, 1.0, {}},
        {"GraphicsPanel.drawNext(Graphics)", 100, 300, 0.9, {}}}},
      {"Settings.load()", 2000, 5000, 0.01,
       {{"Ini.load(File)", 1500, 4000, 1.0,
         {{"IniParser.parse(InputStream)", 1000, 3000, 1.0,
           {{"IniParser.parseSectionLine(String)", 50, 200, 1.0, {}},
            {"IniParser.parseOptionLine(String)", 50, 200, 1.0, {}},
            {"IniBuilder.handleOption(String,String)", 50, 200, 1.0, {}}}}}}}},
      {"HighScoreTable.save()", 500, 2000, 0.005, {{"HighScore.compareTo(HighScore)", 50, 200, 1.0, {}}}},
  };
  return frame;
}

const CallSpec& key_handler() {
  static const CallSpec spec = {"KeyBindings.handle(KeyEvent)", 200, 1000, 1.0,
                                {{"KeyBindings.lookup(int)", 20, 80, 1.0, {}},
                                 {"Piece.rotate()", 50, 300, 0.5, {}},
                                 {"Piece.move(int)", 50, 300, 0.5, {}}}};
  return spec;
}

constexpr std::uint64_t kMainThread = 1;
constexpr std::uint64_t kEventThread = 2;
constexpr std::uint64_t kFirstLeakThread = 100;
constexpr Micros kFramePeriod = 50'000;

void emit_game_activity(const MethodIndex& idx, Micros duration, Rng& rng, ThreadEvents& threads) {
  auto& main_events = threads[kMainThread];
  const MethodId main_id = idx.at("Main.main(String[])");
  main_events.push_back({0, main_id, Action::Enter});
  for (Micros frame = 0; frame + kFramePeriod <= duration; frame += kFramePeriod) {
    Micros cursor = frame + 1 + rng.between(0, 200);
    for (const auto& call : game_frame()) {
      if (!rng.chance(call.probability)) continue;
      const Micros room = frame + kFramePeriod - cursor - 1;
      if (room < call.min_micros) continue;
      cursor = emit_call(call, cursor, room, idx, rng, main_events) + 1 + rng.between(0, 200);
    }
    if (rng.chance(0.3)) {
      const Micros start = frame + rng.between(0, kFramePeriod / 2);
      emit_call(key_handler(), start, kFramePeriod / 2 - 1, idx, rng, threads[kEventThread]);
    }
  }
}

std::vector<MethodDescriptor> small_program(const char* package, const char* class_name,
                                            const std::vector<const char*>& methods) {
  std::vector<MethodDescriptor> out;
  std::uint32_t id = 1;
  for (const auto* m : methods) out.push_back({MethodId{id++}, m, class_name, split_package(package)});
  return out;
}

std::vector<IngestMessage> to_messages(const std::string& program, const std::vector<MethodDescriptor>& methods,
                                       const ThreadEvents& threads, Micros batch) {
  std::vector<IngestMessage> out;
  out.emplace_back(SessionMetaMsg{program, 0});
  for (const auto& m : methods) out.emplace_back(RegisterMsg{m});

  std::map<std::pair<Micros, std::uint64_t>, std::vector<TraceEvent>> batches;
  for (const auto& [thread, events] : threads)
    for (const auto& e : events) batches[{e.timestamp / batch, thread}].push_back(e);
  for (auto& [key, events] : batches) out.emplace_back(EventsMsg{ThreadId{key.second}, std::move(events)});
  return out;
}

}  // namespace

std::vector<MethodDescriptor> tetris_program(bool refactored) {
  std::vector<MethodDescriptor> out;
  std::uint32_t id = 1;
  for (const auto& cls : tetris_classes()) {
    auto path = split_package(cls.package);
    if (refactored && !path.empty() && path.front() == "game") path.insert(path.begin(), "main");
    for (const auto* m : cls.methods) out.push_back({MethodId{id++}, m, cls.class_name, path});
  }
  return out;
}

std::vector<IngestMessage> simulate(const ScenarioParams& p) {
  if (p.batch_micros <= 0) throw InvalidArgument("batch length must be positive");
  if (p.duration_micros < 0) throw InvalidArgument("duration must not be negative");
  Rng rng(p.seed);
  ThreadEvents threads;

  switch (p.kind) {
    case ScenarioKind::Figure3: {
      // main=1, A=2, C=3, B=4; t_i = i seconds.
      auto methods = small_program("example", "Example", {"main()", "A()", "C()", "B()"});
      constexpr Micros s = 1'000'000;
      threads[kMainThread] = {{0 * s, MethodId{1}, Action::Enter}, {1 * s, MethodId{2}, Action::Enter},
                              {2 * s, MethodId{3}, Action::Enter}, {3 * s, MethodId{3}, Action::Exit},
                              {4 * s, MethodId{2}, Action::Exit},  {5 * s, MethodId{4}, Action::Enter},
                              {6 * s, MethodId{4}, Action::Exit}};
      return to_messages("figure3", methods, threads, p.batch_micros);
    }
    case ScenarioKind::DutyCycle: {
      if (!(p.duty > 0.0 && p.duty < 1.0)) throw InvalidArgument("duty fraction must be in (0, 1)");
      if (p.period_micros <= 0) throw InvalidArgument("period must be positive");
      auto methods = small_program("demo", "DutyCycle", {"main()", "work()"});
      const auto on = static_cast<Micros>(std::llround(p.duty * static_cast<double>(p.period_micros)));
      const Micros jitter = std::min<Micros>(2000, std::min(on, p.period_micros - on) / 4);
      auto& ev = threads[kMainThread];
      ev.push_back({0, MethodId{1}, Action::Enter});
      for (Micros k = 0; (k + 1) * p.period_micros <= p.duration_micros; ++k) {
        const Micros base = k * p.period_micros;
        ev.push_back({base + 1 + rng.between(0, jitter), MethodId{2}, Action::Enter});
        ev.push_back({base + on + rng.between(0, jitter), MethodId{2}, Action::Exit});
      }
      return to_messages("duty-cycle", methods, threads, p.batch_micros);
    }
    case ScenarioKind::ThreadLeak: {
      if (p.restarts < 0) throw InvalidArgument("restarts must not be negative");
      if (p.restart_interval_micros < 0) throw InvalidArgument("restart interval must not be negative");
      auto methods = tetris_program(true);
      const auto idx = index_methods(methods);
      emit_game_activity(idx, p.duration_micros, rng, threads);
      const MethodId run = idx.at("MainSinglePlayerThread.run()");
      for (int k = 0; k < p.restarts; ++k)
        threads[kFirstLeakThread + k].push_back({k * p.restart_interval_micros, run, Action::Enter});
      return to_messages("tetris", methods, threads, p.batch_micros);
    }
    case ScenarioKind::RefactorBefore:
    case ScenarioKind::RefactorAfter: {
      auto methods = tetris_program(p.kind == ScenarioKind::RefactorAfter);
      emit_game_activity(index_methods(methods), p.duration_micros, rng, threads);
      return to_messages("tetris", methods, threads, p.batch_micros);
    }
  }
  throw InvalidArgument("unknown scenario");
}

void replay(const std::vector<IngestMessage>& messages, double speed, const MessageSink& sink,
            const Sleeper& sleep) {
  if (!(speed > 0.0) || !std::isfinite(speed)) throw InvalidArgument("replay speed must be a positive number");
  std::optional<Micros> previous;
  for (const auto& msg : messages) {
    if (const auto* ev = std::get_if<EventsMsg>(&msg); ev && !ev->events.empty()) {
      const Micros first = ev->events.front().timestamp;
      if (previous && first > *previous) {
        const double gap = static_cast<double>(first - *previous) / speed;
        sleep(std::chrono::microseconds(static_cast<std::int64_t>(std::llround(gap))));
      }
      previous = previous ? std::max(*previous, first) : first;
    }
    sink(msg);
  }
}

void sweep_trace(const std::vector<IngestMessage>& messages, const PipelineConfig& config,
                 const std::function<void(const Frame&, const CityPipeline&)>& on_frame) {
  CityPipeline pipeline(config);
  auto session = pipeline.session();

  std::map<std::uint64_t, std::vector<TraceEvent>> per_thread;
  std::optional<Micros> first, last;
  for (const auto& msg : messages) {
    if (const auto* ev = std::get_if<EventsMsg>(&msg)) {
      auto& dst = per_thread[ev->thread.value];
      dst.insert(dst.end(), ev->events.begin(), ev->events.end());
      for (const auto& e : ev->events) {
        first = first ? std::min(*first, e.timestamp) : e.timestamp;
        last = last ? std::max(*last, e.timestamp) : e.timestamp;
      }
    } else {
      try {
        session->handle(msg);
      } catch (const ConflictingRegistration&) {
        // Counted by the live server; a recorded trace keeps its first binding.
      }
    }
  }
  if (!first) return;

  std::map<std::uint64_t, std::size_t> cursor;
  Micros tick = *first;
  do {
    tick += config.tick_micros;
    for (auto& [thread, events] : per_thread) {
      auto& pos = cursor[thread];
      const auto begin = pos;
      while (pos < events.size() && events[pos].timestamp <= tick) ++pos;
      if (pos == begin) continue;
      EventsMsg batch{ThreadId{thread}, {events.begin() + begin, events.begin() + pos}};
      session->accept_events(batch);
    }
    auto result = pipeline.tick_at(tick);
    if (result.frame) on_frame(*result.frame, pipeline);
  } while (tick < *last);
}

AnalysisReport analyze(const std::vector<IngestMessage>& messages, const PipelineConfig& config) {
  AnalysisReport report;
  std::map<std::uint32_t, double> peak;
  std::vector<MethodDescriptor> methods;
  std::map<std::uint32_t, std::pair<Micros, std::uint32_t>> totals;

  sweep_trace(messages, config, [&](const Frame& frame, const CityPipeline& pipeline) {
    ++report.frames;
    for (const auto& row : frame.rows) {
      auto& p = peak[row.method.value];
      p = std::max(p, row.elevation);
    }
    const auto& engine = pipeline.engine();
    report.engine = engine.stats();
    methods = pipeline.session()->visible_methods();
    totals.clear();
    for (const auto& m : methods) totals[m.id.value] = {engine.total_self_time(m.id), engine.thread_count(m.id)};
  });

  for (const auto& m : methods) {
    MethodReport r;
    r.method = m;
    r.peak_elevation = peak.count(m.id.value) ? peak[m.id.value] : 0.0;
    std::tie(r.total_self_micros, r.thread_count) = totals[m.id.value];
    report.methods.push_back(std::move(r));
  }
  std::stable_sort(report.methods.begin(), report.methods.end(), [](const MethodReport& a, const MethodReport& b) {
    if (a.peak_elevation != b.peak_elevation) return a.peak_elevation > b.peak_elevation;
    return a.method.id < b.method.id;
  });
  return report;
}

namespace {
std::string qualified_name(const MethodDescriptor& m) {
  std::string out = join_package(m.package_path);
  if (!out.empty()) out += '.';
  return out + m.class_name + "." + m.method_name;
}
}  // namespace

std::string format_report_text(const AnalysisReport& report) {
  std::size_t width = 6;
  for (const auto& r : report.methods) width = std::max(width, qualified_name(r.method).size());
  std::ostringstream out;
  out << std::left << std::setw(static_cast<int>(width)) << "method" << "  " << std::right << std::setw(6)
      << "peak" << "  " << std::setw(12) << "self_ms" << "  " << std::setw(7) << "threads" << '\n';
  for (const auto& r : report.methods) {
    out << std::left << std::setw(static_cast<int>(width)) << qualified_name(r.method) << "  " << std::right
        << std::fixed << std::setprecision(4) << std::setw(6) << r.peak_elevation << "  " << std::setprecision(3)
        << std::setw(12) << static_cast<double>(r.total_self_micros) / 1000.0 << "  " << std::setw(7)
        << r.thread_count << '\n';
  }
  return out.str();
}

std::string format_report_json(const AnalysisReport& report) {
  nlohmann::ordered_json out = nlohmann::ordered_json::array();
  for (const auto& r : report.methods) {
    nlohmann::ordered_json row;
    row["id"] = r.method.id.value;
    row["method"] = r.method.method_name;
    row["class"] = r.method.class_name;
    row["package"] = r.method.package_path;
    row["peak_elevation"] = r.peak_elevation;
    row["self_us"] = r.total_self_micros;
    row["threads"] = r.thread_count;
    out.push_back(std::move(row));
  }
  return out.dump(2);
}

}  // namespace perfcity
