// Python bindings for the core operations: attention variants, the
// approximation module, the derivation identities and the cost model.
// Everything crosses the boundary as float64 numpy arrays; all functions are
// pure and deterministic.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "aptkit/apt.hpp"
#include "aptkit/attention.hpp"
#include "aptkit/costmodel.hpp"
#include "aptkit/matrix.hpp"
#include "aptkit/verify.hpp"

namespace py = pybind11;
using namespace aptkit;

namespace {

Matrix to_matrix(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 2) throw py::value_error("expected a 2-d array");
  Matrix m(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
  std::copy(a.data(), a.data() + m.size(), m.data.begin());
  return m;
}

py::array_t<double> to_array(const Matrix& m) {
  py::array_t<double> a({m.rows, m.cols});
  std::copy(m.data.begin(), m.data.end(), a.mutable_data());
  return a;
}

using NpMatrix = py::array_t<double, py::array::c_style | py::array::forcecast>;

AttentionParams make_attention(const NpMatrix& w_q, const NpMatrix& w_k, const NpMatrix& w_v,
                               const NpMatrix& w_o, std::size_t heads) {
  AttentionParams params;
  params.w_q = to_matrix(w_q);
  params.w_k = to_matrix(w_k);
  params.w_v = to_matrix(w_v);
  params.w_o = to_matrix(w_o);
  params.heads = heads;
  return params;
}

AptParams make_apt(const NpMatrix& p_v, const NpMatrix& w1, const NpMatrix& w2,
                   double log_scale) {
  AptParams params;
  params.p_v = to_matrix(p_v);
  params.w1 = to_matrix(w1);
  params.w2 = to_matrix(w2);
  params.log_scale = log_scale;
  return params;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Prompt-extended attention, its low-rank approximation module and the "
            "associated parameter/FLOP accounting.";

  // ------------------------------------------------------------ attention --

  m.def(
      "self_attention",
      [](const NpMatrix& x, const NpMatrix& w_q, const NpMatrix& w_k, const NpMatrix& w_v,
         const NpMatrix& w_o, std::size_t heads) {
        return to_array(self_attention(to_matrix(x), make_attention(w_q, w_k, w_v, w_o, heads)));
      },
      py::arg("x"), py::arg("w_q"), py::arg("w_k"), py::arg("w_v"), py::arg("w_o"),
      py::arg("heads") = 1,
      "Multi-head self-attention with output projection; queries are scaled by "
      "1/sqrt(head_dim).");

  m.def(
      "prompt_extended_attention",
      [](const NpMatrix& x, const NpMatrix& prompt, const NpMatrix& w_q, const NpMatrix& w_k,
         const NpMatrix& w_v, const NpMatrix& w_o) {
        PromptExtendedOutput out = prompt_extended_attention(
            to_matrix(x), to_matrix(prompt), make_attention(w_q, w_k, w_v, w_o, 1));
        return py::make_tuple(to_array(out.x_out), to_array(out.p_out));
      },
      py::arg("x"), py::arg("prompt"), py::arg("w_q"), py::arg("w_k"), py::arg("w_v"),
      py::arg("w_o"),
      "Single-head attention over the concatenated rows [prompt; x]; returns "
      "(x_out, prompt_out).");

  m.def(
      "decompose_attention",
      [](const NpMatrix& x, const NpMatrix& prompt, const NpMatrix& w_q, const NpMatrix& w_k,
         const NpMatrix& w_v, const NpMatrix& w_o) {
        AttentionBlocks blocks = decompose_attention(to_matrix(x), to_matrix(prompt),
                                                     make_attention(w_q, w_k, w_v, w_o, 1));
        py::dict out;
        out["input_input"] = to_array(blocks.input_input);
        out["input_prompt"] = to_array(blocks.input_prompt);
        out["prompt_input"] = to_array(blocks.prompt_input);
        out["prompt_prompt"] = to_array(blocks.prompt_prompt);
        out["gamma_input"] = blocks.gamma_input;
        out["gamma_prompt"] = blocks.gamma_prompt;
        return out;
      },
      py::arg("x"), py::arg("prompt"), py::arg("w_q"), py::arg("w_k"), py::arg("w_v"),
      py::arg("w_o"),
      "The joint softmax split into its four query/key blocks plus the per-row "
      "attention-mass sums.");

  m.def(
      "exact_diffusion",
      [](const NpMatrix& x, const NpMatrix& prompt, const NpMatrix& w_q, const NpMatrix& w_k,
         const NpMatrix& w_v, const NpMatrix& w_o) {
        return to_array(exact_diffusion(to_matrix(x), to_matrix(prompt),
                                        make_attention(w_q, w_k, w_v, w_o, 1)));
      },
      py::arg("x"), py::arg("prompt"), py::arg("w_q"), py::arg("w_k"), py::arg("w_v"),
      py::arg("w_o"),
      "What prompting adds to each attended input row before the output projection.");

  m.def(
      "aggregate_softmax",
      [](const NpMatrix& x, const NpMatrix& prompt, const NpMatrix& w_q, const NpMatrix& w_k,
         const NpMatrix& w_v, const NpMatrix& w_o) {
        return to_array(aggregate_softmax(to_matrix(x), to_matrix(prompt),
                                          make_attention(w_q, w_k, w_v, w_o, 1)));
      },
      py::arg("x"), py::arg("prompt"), py::arg("w_q"), py::arg("w_k"), py::arg("w_v"),
      py::arg("w_o"),
      "softmax(x w_q w_k^T prompt^T) times the projected prompt values: the quantity "
      "the low-rank module approximates.");

  m.def(
      "vk_transform_gap",
      [](const NpMatrix& prompt, const NpMatrix& w_q, const NpMatrix& w_k, const NpMatrix& w_v,
         const NpMatrix& w_o) {
        return to_array(
            vk_transform_gap(to_matrix(prompt), make_attention(w_q, w_k, w_v, w_o, 1)));
      },
      py::arg("prompt"), py::arg("w_q"), py::arg("w_k"), py::arg("w_v"), py::arg("w_o"),
      "prompt (w_k w_q^T - w_v): the gap between the key table the aggregated softmax "
      "needs and the stored value table. Rank-bounded independently of prompt length.");

  // --------------------------------------------------------------- module --

  m.def(
      "approx_keys",
      [](const NpMatrix& p_v, const NpMatrix& w1, const NpMatrix& w2) {
        return to_array(approx_keys(make_apt(p_v, w1, w2, 0.0)));
      },
      py::arg("p_v"), py::arg("w1"), py::arg("w2"),
      "Reconstructed key table p_v w1 w2 + p_v.");

  m.def(
      "apt_delta",
      [](const NpMatrix& x, const NpMatrix& p_v, const NpMatrix& w1, const NpMatrix& w2) {
        return to_array(apt_delta(to_matrix(x), make_apt(p_v, w1, w2, 0.0)));
      },
      py::arg("x"), py::arg("p_v"), py::arg("w1"), py::arg("w2"),
      "The additive update alpha * relu(x keys^T) p_v with the global-max gate.");

  m.def(
      "apt_attention",
      [](const NpMatrix& x, const NpMatrix& w_q, const NpMatrix& w_k, const NpMatrix& w_v,
         const NpMatrix& w_o, const NpMatrix& p_v, const NpMatrix& w1, const NpMatrix& w2,
         double log_scale) {
        return to_array(apt_attention(to_matrix(x), make_attention(w_q, w_k, w_v, w_o, 1),
                                      make_apt(p_v, w1, w2, log_scale)));
      },
      py::arg("x"), py::arg("w_q"), py::arg("w_k"), py::arg("w_v"), py::arg("w_o"),
      py::arg("p_v"), py::arg("w1"), py::arg("w2"), py::arg("log_scale") = 0.0,
      "exp(log_scale) * (self_attention(x) + apt_delta(x)).");

  // ----------------------------------------------------------------- cost --

  py::class_<CostSpec>(m, "CostSpec", "One model configuration for the cost accounting.")
      .def(py::init([](std::string name, std::size_t layers, std::size_t d, std::size_t n,
                       std::size_t p, std::size_t r, std::size_t sites, std::size_t ffn_mult,
                       std::size_t encoders) {
             CostSpec spec;
             spec.name = std::move(name);
             spec.layers = layers;
             spec.d = d;
             spec.n = n;
             spec.p = p;
             spec.r = r;
             spec.sites = sites;
             spec.ffn_mult = ffn_mult;
             spec.encoders = encoders;
             return spec;
           }),
           py::arg("name") = "custom", py::arg("layers") = 0, py::arg("d") = 0,
           py::arg("n") = 0, py::arg("p") = 0, py::arg("r") = 0, py::arg("sites") = 0,
           py::arg("ffn_mult") = 4, py::arg("encoders") = 1)
      .def_readwrite("name", &CostSpec::name)
      .def_readwrite("layers", &CostSpec::layers)
      .def_readwrite("d", &CostSpec::d)
      .def_readwrite("n", &CostSpec::n)
      .def_readwrite("p", &CostSpec::p)
      .def_readwrite("r", &CostSpec::r)
      .def_readwrite("sites", &CostSpec::sites)
      .def_readwrite("ffn_mult", &CostSpec::ffn_mult)
      .def_readwrite("encoders", &CostSpec::encoders)
      .def("__repr__", [](const CostSpec& s) {
        std::ostringstream os;
        os << "CostSpec(name='" << s.name << "', layers=" << s.layers << ", d=" << s.d
           << ", n=" << s.n << ", p=" << s.p << ", r=" << s.r << ", sites=" << s.sites
           << ", ffn_mult=" << s.ffn_mult << ", encoders=" << s.encoders << ")";
        return os.str();
      });

  m.def("cost_preset", &cost_preset, py::arg("name"),
        "Named configuration: vilt, meter-self, meter-both, clip-text.");
  m.def("cost_preset_names", &cost_preset_names);
  m.def("params_deep_prompt", &params_deep_prompt, py::arg("spec"),
        "Trainable parameters added by deep prompting: sites * p * d.");
  m.def("params_shallow_prompt", &params_shallow_prompt, py::arg("spec"),
        "Trainable parameters added by shallow prompting: encoders * p * d.");
  m.def("params_apt", &params_apt, py::arg("spec"),
        "Trainable parameters added by the module: sites * (p*d + 2*d*r + 1).");
  m.def(
      "flops_deep_prompt",
      [](const CostSpec& spec, bool materialize) {
        return flops_prompt_attention(spec, materialize ? PromptVariant::deep_full
                                                        : PromptVariant::deep_skip)
            .added_flops;
      },
      py::arg("spec"), py::arg("materialize") = false,
      "FLOPs deep prompting adds across the stack; materialize=True also forms the "
      "prompt query rows.");
  m.def(
      "flops_shallow_prompt",
      [](const CostSpec& spec) {
        return flops_prompt_attention(spec, PromptVariant::shallow).added_flops;
      },
      py::arg("spec"), "FLOPs shallow prompting adds, feed-forward rows included.");
  m.def(
      "flops_apt", [](const CostSpec& spec) { return flops_apt(spec).added_flops; },
      py::arg("spec"), "FLOPs the module adds across the stack.");
  m.def("apt_saving_vs_deep", &apt_saving_vs_deep, py::arg("spec"),
        "Fractional FLOP saving of the module against cached deep prompting.");
  m.def(
      "fit_sequence_length",
      [](const CostSpec& spec, double target_deep_flops) {
        FitResult fit = flops_fit(spec, target_deep_flops);
        return py::make_tuple(fit.n, fit.residual);
      },
      py::arg("spec"), py::arg("target_deep_flops"),
      "Inverts the deep-prompt cost model for the sequence length that lands on the "
      "target; returns (n, relative residual).");
  m.def(
      "cost_table_markdown",
      [](const CostSpec& spec) {
        std::ostringstream os;
        write_cost_table_markdown(os, spec, cost_table(spec));
        return os.str();
      },
      py::arg("spec"), "The full per-method cost table as markdown.");

  // --------------------------------------------------------------- verify --

  m.def(
      "run_identity_suite",
      [](std::size_t d, std::size_t n, std::size_t p, std::size_t instances,
         std::uint64_t seed, double perturb) {
        VerifyConfig cfg;
        cfg.d = d;
        cfg.n = n;
        cfg.p = p;
        cfg.instances = instances;
        cfg.seed = seed;
        cfg.perturb = perturb;
        VerifySuiteResult suite = run_identity_suite(cfg);
        py::list checks;
        for (const CheckResult& c : suite.checks) {
          py::dict entry;
          entry["name"] = c.name;
          entry["max_err"] = c.max_err;
          entry["tol"] = c.tol;
          entry["pass"] = c.pass;
          checks.append(entry);
        }
        return checks;
      },
      py::arg("d") = 16, py::arg("n") = 12, py::arg("p") = 6, py::arg("instances") = 20,
      py::arg("seed") = 42, py::arg("perturb") = 0.0,
      "Runs the derivation-identity suite on random instances; perturb != 0 injects a "
      "fault that must trip the checks.");
}
