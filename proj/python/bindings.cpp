#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "json.hpp"
#include "perfcity/engine.hpp"
#include "perfcity/frame_stream.hpp"
#include "perfcity/ingest.hpp"
#include "perfcity/layout.hpp"
#include "perfcity/server.hpp"
#include "perfcity/workload.hpp"

namespace py = pybind11;
using namespace perfcity;

namespace {

using RowTuple = std::tuple<std::uint32_t, double, std::uint32_t>;
using EventTuple = std::tuple<Micros, std::uint32_t, int>;
using MethodTuple = std::tuple<std::uint32_t, std::string, std::string, std::vector<std::string>>;

Action to_action(int a) {
  if (a != 0 && a != 1) throw py::value_error("action must be 0 (enter) or 1 (exit)");
  return static_cast<Action>(a);
}

std::vector<RowTuple> to_tuples(const std::vector<ElevationRow>& rows) {
  std::vector<RowTuple> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.emplace_back(r.method.value, r.elevation, r.thread_count);
  return out;
}

std::vector<MethodDescriptor> to_methods(const std::vector<MethodTuple>& methods) {
  std::vector<MethodDescriptor> out;
  for (const auto& [id, name, cls, pkg] : methods) out.push_back({MethodId{id}, name, cls, pkg});
  return out;
}

PipelineConfig pipeline_config(double window_ms, double tick_ms, const std::vector<std::string>& exclude) {
  PipelineConfig cfg;
  cfg.window_micros = static_cast<Micros>(window_ms * 1000);
  cfg.tick_micros = static_cast<Micros>(tick_ms * 1000);
  for (const auto& e : exclude) cfg.excluded_packages.push_back(split_package(e));
  return cfg;
}

std::vector<IngestMessage> decode_all(const std::vector<std::string>& lines) {
  std::vector<IngestMessage> out;
  out.reserve(lines.size());
  for (const auto& l : lines) out.push_back(decode_line(l));
  return out;
}

}  // namespace

PYBIND11_MODULE(_perfcity, m) {
  m.doc() = "Live software-city profiler core";

  py::register_exception<MalformedMessage>(m, "MalformedMessage", PyExc_ValueError);
  py::register_exception<ConflictingRegistration>(m, "ConflictingRegistration", PyExc_ValueError);
  py::register_exception<EmptyRegistry>(m, "EmptyRegistry", PyExc_ValueError);
  py::register_exception<InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);
  py::register_exception<net::IoError>(m, "IoError", PyExc_OSError);

  py::class_<ElevationEngine>(m, "Engine")
      .def(py::init<Micros>(), py::arg("window_us") = 3'000'000)
      .def(
          "apply",
          [](ElevationEngine& e, std::uint64_t thread, Micros ts, std::uint32_t method, int action) {
            return static_cast<int>(e.apply(ThreadId{thread}, {ts, MethodId{method}, to_action(action)}));
          },
          py::arg("thread"), py::arg("timestamp_us"), py::arg("method"), py::arg("action"))
      .def(
          "apply_batch",
          [](ElevationEngine& e, std::uint64_t thread, const std::vector<EventTuple>& events) {
            for (const auto& [ts, method, action] : events)
              e.apply(ThreadId{thread}, {ts, MethodId{method}, to_action(action)});
          },
          py::arg("thread"), py::arg("events"))
      .def("tick", [](ElevationEngine& e, Micros now) { return to_tuples(e.tick(now)); }, py::arg("now_us"))
      .def(
          "elevation",
          [](const ElevationEngine& e, std::uint32_t method, Micros end) {
            const auto row = e.elevation(MethodId{method}, Window(e.window_length(), end));
            return std::make_pair(row.elevation, row.thread_count);
          },
          py::arg("method"), py::arg("window_end_us"))
      .def("total_self_time", [](const ElevationEngine& e, std::uint32_t m) { return e.total_self_time(MethodId{m}); })
      .def_property_readonly("window_us", &ElevationEngine::window_length)
      .def_property_readonly("stats", [](const ElevationEngine& e) {
        const auto& s = e.stats();
        py::dict d;
        d["events"] = s.events;
        d["resyncs"] = s.resyncs;
        d["dropped_exits"] = s.dropped_exits;
        d["out_of_order"] = s.out_of_order;
        return d;
      });

  m.def("round_elevation", &round_elevation, py::arg("value"));

  m.def(
      "normalize_line", [](const std::string& line) { return encode_line(decode_line(line)); }, py::arg("line"),
      "Decodes one ingest record and re-encodes it in canonical form. Raises MalformedMessage.");

  m.def(
      "simulate",
      [](const std::string& name, int restarts, double restart_interval_ms, double duty, double period_ms,
         double duration_ms, double batch_ms, std::uint64_t seed) {
        auto kind = parse_scenario(name);
        if (!kind) throw py::value_error("unknown scenario: " + name);
        ScenarioParams p;
        p.kind = *kind;
        p.restarts = restarts;
        p.restart_interval_micros = static_cast<Micros>(restart_interval_ms * 1000);
        p.duty = duty;
        p.period_micros = static_cast<Micros>(period_ms * 1000);
        p.duration_micros = static_cast<Micros>(duration_ms * 1000);
        p.batch_micros = static_cast<Micros>(batch_ms * 1000);
        p.seed = seed;
        std::vector<std::string> lines;
        for (const auto& msg : simulate(p)) lines.push_back(encode_line(msg));
        return lines;
      },
      py::arg("scenario"), py::arg("restarts") = 16, py::arg("restart_interval_ms") = 150.0, py::arg("duty") = 0.3,
      py::arg("period_ms") = 1000.0, py::arg("duration_ms") = 10000.0, py::arg("batch_ms") = 100.0,
      py::arg("seed") = 1);

  m.def(
      "analyze",
      [](const std::vector<std::string>& lines, double window_ms, double tick_ms, const std::vector<std::string>& exclude) {
        const auto messages = decode_all(lines);
        AnalysisReport report;
        {
          py::gil_scoped_release release;
          report = analyze(messages, pipeline_config(window_ms, tick_ms, exclude));
        }
        py::list out;
        for (const auto& r : report.methods) {
          py::dict d;
          d["id"] = r.method.id.value;
          d["method"] = r.method.method_name;
          d["class"] = r.method.class_name;
          d["package"] = r.method.package_path;
          d["peak_elevation"] = r.peak_elevation;
          d["self_us"] = r.total_self_micros;
          d["threads"] = r.thread_count;
          out.append(d);
        }
        return out;
      },
      py::arg("lines"), py::arg("window_ms") = 3000.0, py::arg("tick_ms") = 100.0,
      py::arg("exclude") = std::vector<std::string>{});

  m.def(
      "frames",
      [](const std::vector<std::string>& lines, double window_ms, double tick_ms, const std::vector<std::string>& exclude) {
        const auto messages = decode_all(lines);
        std::vector<std::string> out;
        {
          py::gil_scoped_release release;
          sweep_trace(messages, pipeline_config(window_ms, tick_ms, exclude),
                      [&](const Frame& f, const CityPipeline&) { out.push_back(frame_message(f)); });
        }
        return out;
      },
      py::arg("lines"), py::arg("window_ms") = 3000.0, py::arg("tick_ms") = 100.0,
      py::arg("exclude") = std::vector<std::string>{}, "Frame messages of an offline sweep over a trace.");

  m.def(
      "structure",
      [](const std::vector<MethodTuple>& methods, std::uint64_t rev) {
        const auto descs = to_methods(methods);
        const auto city = build_layout(descs, rev);
        return structure_message(rev, descs, &city);
      },
      py::arg("methods"), py::arg("rev") = 1, "Structure message for (id, method, class, package) tuples.");

  m.def(
      "plots",
      [](const std::vector<MethodTuple>& methods) {
        const auto city = build_layout(to_methods(methods));
        std::map<std::uint32_t, std::pair<int, int>> out;
        for (const auto& [id, p] : city.index) out[id] = {p.x, p.z};
        return out;
      },
      py::arg("methods"));

  py::class_<Server>(m, "Server")
      .def(py::init([](const std::string& host, std::uint16_t ingest_port, std::uint16_t ui_port,
                       std::uint16_t mirror_port, double window_ms, double tick_ms,
                       const std::vector<std::string>& exclude, std::optional<std::filesystem::path> record) {
             ServerConfig cfg;
             cfg.host = host;
             cfg.ingest_port = ingest_port;
             cfg.ui_port = ui_port;
             cfg.mirror_port = mirror_port;
             cfg.pipeline = pipeline_config(window_ms, tick_ms, exclude);
             cfg.record_path = std::move(record);
             return std::make_unique<Server>(cfg);
           }),
           py::arg("host") = "127.0.0.1", py::arg("ingest_port") = 7071, py::arg("ui_port") = 7072,
           py::arg("mirror_port") = 7073, py::arg("window_ms") = 3000.0, py::arg("tick_ms") = 100.0,
           py::arg("exclude") = std::vector<std::string>{}, py::arg("record") = std::nullopt)
      .def("start", &Server::start, py::call_guard<py::gil_scoped_release>())
      .def("stop", &Server::stop, py::call_guard<py::gil_scoped_release>())
      .def_property_readonly("running", &Server::running)
      .def_property_readonly("ingest_port", &Server::ingest_port)
      .def_property_readonly("ui_port", &Server::ui_port)
      .def_property_readonly("mirror_port", &Server::mirror_port)
      .def_property_readonly("client_count", &Server::client_count)
      .def_property_readonly("sessions_started", &Server::sessions_started)
      .def_property_readonly("rev", &Server::rev)
      .def_property_readonly("stats", [](const Server& s) {
        const auto st = s.ingest_stats();
        py::dict d;
        d["messages"] = st.messages;
        d["events"] = st.events;
        d["excluded"] = st.excluded;
        d["out_of_order"] = st.out_of_order;
        d["malformed"] = st.malformed;
        d["placeholders"] = st.placeholders;
        d["conflicts"] = st.conflicts;
        return d;
      })
      .def("__enter__", [](Server& s) -> Server& {
        py::gil_scoped_release release;
        s.start();
        return s;
      }, py::return_value_policy::reference)
      .def("__exit__", [](Server& s, py::args) {
        py::gil_scoped_release release;
        s.stop();
      });
}
