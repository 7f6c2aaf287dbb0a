#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>

#include "execstream/action_store.hpp"
#include "execstream/errors.hpp"
#include "execstream/predictor.hpp"
#include "execstream/provider.hpp"
#include "execstream/sim.hpp"
#include "execstream/trace.hpp"
#include "execstream/wire.hpp"

namespace py = pybind11;
using namespace execstream;

namespace {

Token to_token(const py::object& value) {
  if (py::isinstance<py::int_>(value)) return Token::from_seed(value.cast<std::uint64_t>());
  auto raw = value.cast<std::string>();
  if (raw.size() != 16) throw py::value_error("token must be 16 bytes or an integer seed");
  Token t;
  std::memcpy(t.bytes.data(), raw.data(), 16);
  return t;
}

py::bytes to_bytes(std::span<const std::uint8_t> b) {
  return py::bytes(reinterpret_cast<const char*>(b.data()), b.size());
}

std::vector<std::uint8_t> from_bytes(const py::bytes& b) {
  std::string s = b;
  return {s.begin(), s.end()};
}

ActionKind parse_kind(const std::string& s) {
  if (s == "startup") return ActionKind::startup;
  if (s == "exit") return ActionKind::exit;
  if (s == "workload") return ActionKind::workload;
  throw py::value_error("unknown action kind '" + s + "'");
}

py::dict metrics_dict(const RunMetrics& m) {
  py::dict d;
  d["strategy"] = m.strategy;
  d["T"] = m.T;
  d["N"] = m.N;
  d["P"] = m.P;
  d["io_count"] = m.io_count;
  d["delivered_blocks"] = m.delivered_blocks;
  d["backing_reads"] = m.backing_reads;
  d["b_per_io"] = m.b_per_io;
  d["hit_rate"] = m.hit_rate;
  d["n_t"] = m.n_t;
  d["n_p"] = m.n_p;
  d["p_t"] = m.p_t;
  d["mean_us"] = m.mean_us;
  d["p50_us"] = m.p50_us;
  d["p99_us"] = m.p99_us;
  d["latencies_us"] = m.latencies_us;
  return d;
}

Trace trace_arg(const py::object& trace) {
  if (py::isinstance<py::str>(trace)) {
    auto text = trace.cast<std::string>();
    // A trace file body has whitespace-separated columns; anything else is a spec.
    if (text.find('=') == std::string::npos && text.find(' ') != std::string::npos) return parse_trace(text);
    return generate_trace(parse_trace_spec(text));
  }
  return trace.cast<Trace>();
}

std::uint32_t total_for(const py::object& trace, std::uint32_t total) {
  if (total != 0 || !py::isinstance<py::str>(trace)) return total;
  auto text = trace.cast<std::string>();
  if (text.find('=') == std::string::npos && text.find(' ') != std::string::npos) return 0;
  return parse_trace_spec(text).total_blocks;
}

}  // namespace

PYBIND11_MODULE(_execstream, m) {
  m.doc() = "Predictive block streaming: predictor, codecs, action store and simulator.";

  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<StoreError>(m, "StoreError", PyExc_ValueError);
  py::register_exception<ProtocolError>(m, "ProtocolError", PyExc_ValueError);

  m.attr("DEFAULT_BLOCK_SIZE") = kDefaultBlockSize;
  m.attr("DEFAULT_SEG_MAX") = kDefaultSegMax;

  m.def("token_from_seed", [](std::uint64_t seed) { return to_bytes(Token::from_seed(seed).bytes); });
  m.def("normalize_segment", [](std::vector<BlockIndex> b) { return normalize_segment(b); });
  m.def(
      "segment_variance",
      [](std::vector<BlockIndex> b, const std::string& estimator) {
        return segment_variance(b, estimator == "sum" ? VarianceEstimator::sum : VarianceEstimator::mean);
      },
      py::arg("blocks"), py::arg("estimator") = "mean");
  m.def("segment_split", [](std::vector<BlockIndex> b, std::size_t seg_max) {
    std::vector<std::vector<BlockIndex>> out;
    for (auto& s : segment_split(b, seg_max)) out.push_back(std::move(s.blocks));
    return out;
  });

  py::class_<Trace>(m, "Trace")
      .def(py::init<>())
      .def_readwrite("executable", &Trace::executable)
      .def_property(
          "events",
          [](const Trace& t) {
            std::vector<std::pair<BlockIndex, Micros>> out;
            for (const auto& e : t.events) out.emplace_back(e.block, e.think_time);
            return out;
          },
          [](Trace& t, const std::vector<std::pair<BlockIndex, Micros>>& ev) {
            t.events.clear();
            for (auto [b, think] : ev) t.events.push_back({b, think});
          })
      .def("blocks", &Trace::blocks)
      .def("format", [](const Trace& t) { return format_trace(t); })
      .def_static("parse", [](const std::string& text) { return parse_trace(text); })
      .def("__len__", [](const Trace& t) { return t.events.size(); });

  m.def("generate_trace", [](const std::string& spec) { return generate_trace(parse_trace_spec(spec)); },
        py::arg("spec"), "Synthetic trace from a shape name or key=value spec text.");

  py::class_<Action>(m, "Action")
      .def(py::init([](std::string exe, const std::string& kind, ActionId id,
                       std::vector<std::vector<BlockIndex>> segments) {
             Action a{std::move(exe), parse_kind(kind), id, {}};
             for (auto& s : segments) a.segments.push_back(Segment{std::move(s)});
             return a;
           }),
           py::arg("executable"), py::arg("kind") = "workload", py::arg("id") = 0, py::arg("segments"))
      .def_readonly("executable", &Action::executable)
      .def_readonly("id", &Action::id)
      .def_property_readonly("kind", [](const Action& a) { return std::string(to_string(a.kind)); })
      .def_property_readonly("segments",
                             [](const Action& a) {
                               std::vector<std::vector<BlockIndex>> out;
                               for (const auto& s : a.segments) out.push_back(s.blocks);
                               return out;
                             })
      .def("flatten", &Action::flatten)
      .def("__eq__", [](const Action& a, const Action& b) { return a == b; });

  py::class_<ActionStore>(m, "ActionStore")
      .def(py::init([](std::uint16_t seg_max) {
             ActionStore s;
             s.seg_max = seg_max;
             return s;
           }),
           py::arg("seg_max") = kDefaultSegMax)
      .def_readwrite("seg_max", &ActionStore::seg_max)
      .def("put", &ActionStore::put)
      .def("__len__", &ActionStore::action_count)
      .def("actions",
           [](const ActionStore& s) {
             std::vector<Action> out;
             for (const auto& [name, list] : s.actions) out.insert(out.end(), list.begin(), list.end());
             return out;
           })
      .def("encode", [](const ActionStore& s) { return to_bytes(encode_actions(s)); })
      .def_static("decode", [](const py::bytes& b) { return decode_actions(from_bytes(b)); })
      .def("save", [](const ActionStore& s, const std::string& path) { save_actions_file_atomic(s, path); })
      .def_static("load", &load_actions_file)
      .def(
          "describe",
          [](const ActionStore& s, const std::string& estimator) {
            return describe_actions(s, estimator == "sum" ? VarianceEstimator::sum : VarianceEstimator::mean);
          },
          py::arg("estimator") = "mean")
      .def("__eq__", [](const ActionStore& a, const ActionStore& b) { return a == b; });

  m.def(
      "encode_request",
      [](const py::object& token, const std::string& exe, BlockIndex block, bool end_run) {
        wire::RequestFrame f{to_token(token), exe, block,
                             end_run ? wire::RequestType::end_run : wire::RequestType::fetch};
        return to_bytes(wire::encode_request(f));
      },
      py::arg("token"), py::arg("executable"), py::arg("block"), py::arg("end_run") = false);
  m.def("decode_request", [](const py::bytes& b) {
    auto f = wire::decode_request(from_bytes(b));
    py::dict d;
    d["token"] = to_bytes(f.token.bytes);
    d["executable"] = f.executable;
    d["block"] = f.block;
    d["end_run"] = f.type == wire::RequestType::end_run;
    return d;
  });
  m.def(
      "encode_response",
      [](const std::vector<std::pair<BlockIndex, py::bytes>>& blocks, std::size_t block_size,
         const std::string& status) {
        wire::ResponseFrame f;
        if (status == "unknown_executable") {
          f.status = wire::Status::unknown_executable;
        } else if (status == "out_of_range") {
          f.status = wire::Status::out_of_range;
        } else if (status != "ok") {
          throw py::value_error("unknown status '" + status + "'");
        }
        for (const auto& [index, data] : blocks) f.blocks.push_back({index, from_bytes(data)});
        return to_bytes(wire::encode_response(f, block_size));
      },
      py::arg("blocks"), py::arg("block_size") = kDefaultBlockSize, py::arg("status") = "ok");
  m.def(
      "decode_response",
      [](const py::bytes& b, std::size_t block_size) {
        auto f = wire::decode_response(from_bytes(b), block_size);
        py::list blocks;
        for (const auto& p : f.blocks) blocks.append(py::make_tuple(p.index, to_bytes(p.data)));
        py::dict d;
        d["status"] = wire::to_string(f.status);
        d["blocks"] = blocks;
        return d;
      },
      py::arg("data"), py::arg("block_size") = kDefaultBlockSize);

  py::class_<Predictor>(m, "Predictor")
      .def(py::init([](std::uint16_t seg_max, const std::string& checkpoints, int first_segment_matches,
                       Micros construction_window, Micros idle_timeout, std::optional<ActionStore> store) {
             PredictorConfig c;
             c.seg_max = seg_max;
             if (checkpoints == "prose") {
               c.checkpoints = CheckpointMode::prose;
             } else if (checkpoints != "figure") {
               throw py::value_error("checkpoints must be 'figure' or 'prose'");
             }
             if (first_segment_matches != 2 && first_segment_matches != 3) {
               throw py::value_error("first_segment_matches must be 2 or 3");
             }
             c.first_segment_matches = first_segment_matches;
             c.construction_window = construction_window;
             c.session_idle_timeout = idle_timeout;
             return std::make_unique<Predictor>(c, store.value_or(ActionStore{.seg_max = seg_max}));
           }),
           py::arg("seg_max") = kDefaultSegMax, py::arg("checkpoints") = "figure",
           py::arg("first_segment_matches") = 2, py::arg("construction_window") = 3'000'000,
           py::arg("idle_timeout") = 10'000'000, py::arg("store") = py::none())
      .def(
          "handle_request",
          [](Predictor& p, const py::object& token, const std::string& exe, BlockIndex block, Micros now) {
            return p.handle_request(to_token(token), exe, block, now).respond_blocks;
          },
          py::arg("token"), py::arg("executable"), py::arg("block"), py::arg("now"))
      .def(
          "finish_session",
          [](Predictor& p, const py::object& token, const std::string& exe, Micros now) {
            auto a = p.finish_session(to_token(token), exe, now);
            return a ? std::optional<Action>(**a) : std::nullopt;
          },
          py::arg("token"), py::arg("executable"), py::arg("now"))
      .def("expire", [](Predictor& p, Micros now) { return p.expire(now).size(); })
      .def("finalize_all", [](Predictor& p) { return p.finalize_all().size(); })
      .def("store", &Predictor::store)
      .def("session_stages", [](const Predictor& p) {
        std::vector<std::string> out;
        for (const auto& s : p.sessions()) out.emplace_back(to_string(s.stage));
        return out;
      });

  py::class_<LatencyModel>(m, "LatencyModel")
      .def(py::init<>())
      .def_readwrite("net_rtt_us", &LatencyModel::net_rtt_us)
      .def_readwrite("net_per_block_us", &LatencyModel::net_per_block_us)
      .def_readwrite("disk_read_us", &LatencyModel::disk_read_us)
      .def_readwrite("mem_read_us", &LatencyModel::mem_read_us)
      .def_readwrite("loss_rate", &LatencyModel::loss_rate)
      .def_readwrite("retransmit_penalty_us", &LatencyModel::retransmit_penalty_us)
      .def_readwrite("seed", &LatencyModel::seed)
      .def("round_trip_us", &LatencyModel::round_trip_us)
      .def_static("wifi", &LatencyModel::wifi);

  m.def(
      "simulate",
      [](const py::object& trace, const std::string& strategy, std::uint32_t total_blocks, std::uint16_t seg_max,
         const LatencyModel& model) {
        auto t = trace_arg(trace);
        ServerConfig sc;
        sc.provider.strategy = parse_strategy(strategy);
        sc.predictor.seg_max = seg_max;
        SimOptions o;
        o.total_blocks = total_for(trace, total_blocks);
        SimulationResult r;
        {
          py::gil_scoped_release release;
          r = simulate(t, ClientConfig{}, sc, model, o);
        }
        auto d = metrics_dict(r.metrics);
        d["training_round_trips"] = r.training.round_trips;
        return d;
      },
      py::arg("trace"), py::arg("strategy") = "nv_async", py::arg("total_blocks") = 0,
      py::arg("seg_max") = kDefaultSegMax, py::arg("model") = LatencyModel{},
      "Construction replay, then a measured replay under `strategy`.");

  m.def(
      "compare",
      [](const py::object& trace, std::uint32_t total_blocks, const LatencyModel& model) {
        auto t = trace_arg(trace);
        CompareOptions o;
        o.sim.total_blocks = total_for(trace, total_blocks);
        std::vector<RunMetrics> rows;
        {
          py::gil_scoped_release release;
          rows = compare_strategies(t, model, o);
        }
        py::list out;
        for (const auto& r : rows) out.append(metrics_dict(r));
        return out;
      },
      py::arg("trace"), py::arg("total_blocks") = 0, py::arg("model") = LatencyModel{});

  m.def(
      "bench_csv",
      [](const py::object& trace, std::uint32_t total_blocks, const LatencyModel& model) {
        auto t = trace_arg(trace);
        CompareOptions o;
        o.sim.total_blocks = total_for(trace, total_blocks);
        py::gil_scoped_release release;
        return metrics_csv(compare_strategies(t, model, o));
      },
      py::arg("trace"), py::arg("total_blocks") = 0, py::arg("model") = LatencyModel{});

  m.def(
      "readahead",
      [](const py::object& trace, std::uint32_t total_blocks, std::size_t window_max, const LatencyModel& model) {
        auto t = trace_arg(trace);
        auto total = total_for(trace, total_blocks);
        if (total == 0) {
          for (const auto& e : t.events) total = std::max(total, e.block + 1);
        }
        return metrics_dict(baseline_readahead(t, model, total, window_max));
      },
      py::arg("trace"), py::arg("total_blocks") = 0, py::arg("window_max") = 32, py::arg("model") = LatencyModel{});

  m.def(
      "loss_sweep",
      [](const py::object& trace, std::vector<double> rates, std::size_t replications, const LatencyModel& model,
         std::uint32_t total_blocks) {
        auto t = trace_arg(trace);
        SimOptions o;
        o.total_blocks = total_for(trace, total_blocks);
        std::vector<LossPoint> pts;
        {
          py::gil_scoped_release release;
          auto r = simulate(t, ClientConfig{}, ServerConfig{}, model, o);
          pts = loss_sweep(r.measured, model, rates, replications);
        }
        std::vector<std::tuple<double, double, double>> out;
        for (const auto& p : pts) out.emplace_back(p.loss_rate, p.mean_us, p.degradation);
        return out;
      },
      py::arg("trace"), py::arg("rates"), py::arg("replications") = 2000, py::arg("model") = LatencyModel{},
      py::arg("total_blocks") = 0, "(loss_rate, mean_us, degradation) per rate for the nv_async measured run.");
}
