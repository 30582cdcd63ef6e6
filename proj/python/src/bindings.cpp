#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "vital/diagnostics.hpp"
#include "vital/experiments.hpp"
#include "vital/training.hpp"

namespace py = pybind11;
using namespace vital;
using json = nlohmann::json;

namespace {

json sample_json(const FiveTuple& s) {
    return {{"id", s.id},       {"question", s.question}, {"answer", s.answer}, {"type", to_string(s.type)},
            {"K", s.K},         {"split", s.split},       {"chain", s.chain_text}, {"retries", s.retries},
            {"closed_ended", s.closed_ended()}};
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Latent reasoning with training-time scaffolding, desk scale";

    // Library errors surface as ValueError subclasses carrying the class name.
    static py::exception<Error> vital_error(m, "VitalError", PyExc_ValueError);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            py::set_error(vital_error, e.what());
        }
    });

    m.def("build_dataset", [](const std::filesystem::path& dir, std::size_t n, std::uint64_t seed, const std::string& faults) {
        DatasetConfig cfg;
        cfg.n = n;
        cfg.seed = seed;
        MockTeacher teacher(parse_fault_specs(faults), seed);
        py::gil_scoped_release release;
        return json(build_dataset(dir, cfg, teacher)).dump();
    }, py::arg("out_dir"), py::arg("n") = 100, py::arg("seed") = 7, py::arg("faults") = "");

    m.def("load_dataset", [](const std::filesystem::path& dir) {
        json out = json::array();
        for (const auto& s : load_dataset(dir)) out.push_back(sample_json(s));
        return out.dump();
    }, py::arg("dir"));

    m.def("token_f1", &token_f1, py::arg("prediction"), py::arg("gold"));
    m.def("accuracy", &accuracy, py::arg("predictions"), py::arg("golds"));
    m.def("normalize_for_match", &normalize_for_match, py::arg("text"));

    m.def("trace_similarity", [](const std::vector<std::vector<double>>& states) {
        std::vector<Tensor> ts;
        for (const auto& s : states) ts.push_back(Tensor::vector(s));
        const auto S = trace_similarity(ts);
        std::vector<std::vector<double>> out(S.K, std::vector<double>(S.K));
        for (std::size_t i = 0; i < S.K; ++i)
            for (std::size_t j = 0; j < S.K; ++j) out[i][j] = S.at(i, j);
        return out;
    }, py::arg("states"));

    m.def("detach_checkpoint", [](const std::filesystem::path& src, const std::filesystem::path& dst) {
        bool noop = false;
        detach_scaffolding(Checkpoint::load(src), &noop).save(dst);
        return !noop;
    }, py::arg("src"), py::arg("dst"));

    m.def("checkpoint_info", [](const std::filesystem::path& path) {
        const auto ckpt = Checkpoint::load(path);
        json ns = json::object();
        for (const auto& n : ckpt.namespaces()) ns[n] = ckpt.parameter_count(n);
        return json{{"namespaces", ns}, {"digest", checkpoint_digest(ckpt)}}.dump();
    }, py::arg("path"));

    py::class_<Model>(m, "Model")
        .def_static("load", [](const std::filesystem::path& p) { return Model::from_checkpoint(Checkpoint::load(p)); },
                    py::arg("path"))
        .def_static("load_deployed", [](const std::filesystem::path& p) { return Model::load_deployed(Checkpoint::load(p)); },
                    py::arg("path"))
        .def_static("desk", [](std::uint64_t seed, bool with_scaffolding) {
            BackboneConfig bc;
            bc.seed = seed;
            std::optional<ScaffoldConfig> sc;
            if (with_scaffolding) {
                sc.emplace();
                sc->seed = derive_seed(seed, 0x5C);
            }
            return Model(bc, sc);
        }, py::arg("seed") = 7, py::arg("with_scaffolding") = true)
        .def_property_readonly("has_scaffolding", &Model::has_scaffolding)
        .def("trainable_names", &Model::trainable_names)
        .def("save", [](const Model& self, const std::filesystem::path& p) { self.to_checkpoint().save(p); }, py::arg("path"))
        .def("predict", [](const Model& self, const std::filesystem::path& data_dir, int K, std::size_t max_len) {
            const auto data = load_dataset(data_dir);
            py::gil_scoped_release release;
            const auto preds = predict_answers(self, data, K, max_len);
            std::vector<std::pair<std::string, std::string>> out;
            for (std::size_t i = 0; i < data.size(); ++i) out.emplace_back(data[i].id, preds[i]);
            return out;
        }, py::arg("data_dir"), py::arg("K") = 4, py::arg("max_len") = 24)
        .def("train", [](Model& self, const std::filesystem::path& data_dir, const std::string& strategy,
                         const std::string& config_json, std::vector<std::size_t> epochs) {
            if (epochs.size() != 3) throw ConfigError("epochs takes three phase counts");
            const TrainConfig tc = json::parse(config_json.empty() ? "{}" : config_json).get<TrainConfig>();
            const auto data = select_split(load_dataset(data_dir), "train");
            py::gil_scoped_release release;
            const auto res = run_curriculum(self, curriculum_strategy_from_string(strategy), data, tc,
                                            {epochs[0], epochs[1], epochs[2]});
            std::vector<double> losses;
            for (const auto& p : res.phases)
                losses.push_back(p.epoch_mean_total.empty() ? 0.0 : p.epoch_mean_total.back());
            return losses;
        }, py::arg("data_dir"), py::arg("strategy") = "3phase", py::arg("config_json") = "",
           py::arg("epochs") = std::vector<std::size_t>{1, 1, 1});
}
