#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "dinglab/guidance.hpp"
#include "dinglab/metrics.hpp"
#include "dinglab/oracle.hpp"
#include "dinglab/prior.hpp"
#include "dinglab/rng.hpp"
#include "dinglab/schedule.hpp"
#include "dinglab/task.hpp"

namespace py = pybind11;
using namespace ding;

namespace {

NoiseSchedule make_noise_schedule(const std::string& kind) {
  return NoiseSchedule{schedule_kind_from_string(kind)};
}

EtaSchedule make_eta_schedule(const std::string& kind, double scale) {
  EtaSchedule es;
  es.kind = eta_kind_from_string(kind);
  es.scale = scale;
  return es;
}

MethodSpec make_method(const std::string& kind, double lambda, double gamma_n,
                       bool delayed_divide_by_sigma) {
  MethodSpec m;
  m.kind = method_kind_from_string(kind);
  m.lambda = lambda;
  m.gamma_n = gamma_n;
  m.delayed_divide_by_sigma = delayed_divide_by_sigma;
  return m;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Analytic-prior posterior-sampling lab (C++ core)";

  py::class_<Rng>(m, "Rng")
      .def(py::init<std::uint64_t>(), py::arg("seed"))
      .def("uniform", &Rng::uniform)
      .def("normal", &Rng::normal)
      .def("normal_vec", &Rng::normal_vec, py::arg("n"));
  m.def("derive_rng", &derive_rng, py::arg("master_seed"), py::arg("stream"));

  py::class_<NoiseSchedule>(m, "NoiseSchedule")
      .def(py::init(&make_noise_schedule), py::arg("kind") = "linear")
      .def("alpha", &NoiseSchedule::alpha, py::arg("t"))
      .def("sigma", &NoiseSchedule::sigma, py::arg("t"));

  py::class_<EtaSchedule>(m, "EtaSchedule")
      .def(py::init(&make_eta_schedule), py::arg("kind") = "default",
           py::arg("scale") = 1.0);

  py::class_<TimeGrid>(m, "TimeGrid")
      .def_readonly("points", &TimeGrid::points)
      .def_readonly("K", &TimeGrid::K)
      .def("t", &TimeGrid::t, py::arg("k"));
  m.def("make_grid", &make_grid, py::arg("K"));
  m.def("eval_eta", &eval_eta, py::arg("eta_schedule"), py::arg("s"),
        py::arg("t"), py::arg("noise_schedule"));
  m.def(
      "validate_schedule",
      [](const NoiseSchedule& ns, const EtaSchedule& es, const TimeGrid& g) {
        return validate_schedule(ns, es, g).violations;
      },
      py::arg("noise_schedule"), py::arg("eta_schedule"), py::arg("grid"));

  py::class_<DenoiserOutput>(m, "DenoiserOutput")
      .def_readonly("x0_hat", &DenoiserOutput::x0_hat)
      .def_readonly("x1_hat", &DenoiserOutput::x1_hat);

  py::class_<AnalyticPrior>(m, "AnalyticPrior")
      .def("dim", &AnalyticPrior::dim)
      .def("denoise", &AnalyticPrior::denoise, py::arg("x_t"), py::arg("t"),
           py::arg("noise_schedule"))
      .def("sample", &AnalyticPrior::sample, py::arg("rng"))
      .def("mean", &AnalyticPrior::mean)
      .def("cov", &AnalyticPrior::cov);

  py::class_<GaussianPrior, AnalyticPrior>(m, "GaussianPrior")
      .def(py::init<Vec, Mat>(), py::arg("mean"), py::arg("cov"));

  py::class_<GmmPrior, AnalyticPrior>(m, "GmmPrior")
      .def(py::init<Vec, std::vector<Vec>, std::vector<Mat>>(),
           py::arg("weights"), py::arg("means"), py::arg("covs"))
      .def("components", &GmmPrior::components)
      .def("weights", &GmmPrior::weights);

  py::class_<InpaintingTask>(m, "InpaintingTask")
      .def_readonly("d", &InpaintingTask::d)
      .def_readonly("masked", &InpaintingTask::masked)
      .def_readonly("observed", &InpaintingTask::observed)
      .def_readonly("y", &InpaintingTask::y)
      .def_readonly("sigma_y", &InpaintingTask::sigma_y)
      .def("fully_masked", &InpaintingTask::fully_masked);
  m.def(
      "build_task",
      [](const Vec& x_star, const std::vector<int>& masked, double sigma_y) {
        return build_task(x_star, masked, sigma_y);
      },
      py::arg("x_star"), py::arg("masked"), py::arg("sigma_y") = 0.01);
  m.def("cpsnr", &cpsnr, py::arg("x_hat"), py::arg("task"),
        py::arg("peak") = -1.0);

  py::class_<MaskGrid>(m, "MaskGrid")
      .def(py::init<int, int, std::vector<std::uint8_t>>(), py::arg("width"),
           py::arg("height"), py::arg("observed"))
      .def_readonly("width", &MaskGrid::width)
      .def_readonly("height", &MaskGrid::height)
      .def_readonly("observed", &MaskGrid::observed);
  m.def(
      "downsample_mask",
      [](const MaskGrid& pm, int factor, const std::string& mode,
         double threshold) {
        const auto dm = mode == "bilinear" ? DownsampleMode::Bilinear
                                           : DownsampleMode::AvgPool;
        return downsample_mask(pm, factor, dm, threshold);
      },
      py::arg("mask"), py::arg("factor"), py::arg("mode") = "avgpool",
      py::arg("threshold") = 0.5);

  py::class_<MethodSpec>(m, "MethodSpec")
      .def(py::init(&make_method), py::arg("kind"), py::arg("lambda_") = 1.0,
           py::arg("gamma_n") = -1.0,
           py::arg("delayed_divide_by_sigma") = false);

  py::class_<StepRecord>(m, "StepRecord")
      .def_readonly("k", &StepRecord::k)
      .def_readonly("s", &StepRecord::s)
      .def_readonly("t", &StepRecord::t)
      .def_readonly("eta", &StepRecord::eta)
      .def_readonly("gamma", &StepRecord::gamma)
      .def_readonly("obs_residual", &StepRecord::obs_residual);

  py::class_<RunResult>(m, "RunResult")
      .def_readonly("x0", &RunResult::x0)
      .def_readonly("nfe", &RunResult::nfe)
      .def_readonly("trajectory", &RunResult::trajectory);

  m.def(
      "run_sampler",
      [](const MethodSpec& spec, const AnalyticPrior& prior,
         const InpaintingTask& task, int K, const NoiseSchedule& ns,
         const EtaSchedule& es, std::uint64_t seed, bool record_trajectory) {
        Rng rng(seed);
        return run_sampler(spec, prior, task, make_grid(K), ns, es, rng,
                           record_trajectory);
      },
      py::arg("method"), py::arg("prior"), py::arg("task"), py::arg("K"),
      py::arg("noise_schedule"), py::arg("eta_schedule"), py::arg("seed"),
      py::arg("record_trajectory") = false);

  m.def(
      "exact_inpaint_posterior",
      [](const AnalyticPrior& prior, const InpaintingTask& task) {
        return exact_inpaint_posterior(prior, task);
      },
      py::arg("prior"), py::arg("task"));

  m.def(
      "sample_prior",
      [](const AnalyticPrior& prior, int n, std::uint64_t seed) {
        Rng rng(seed);
        return sample_prior(prior, n, rng);
      },
      py::arg("prior"), py::arg("n"), py::arg("seed"));

  m.def(
      "sliced_wasserstein",
      [](const std::vector<Vec>& a, const std::vector<Vec>& b,
         int n_projections, std::uint64_t seed) {
        Rng rng(seed);
        return sliced_wasserstein(a, b, n_projections, rng);
      },
      py::arg("a"), py::arg("b"), py::arg("n_projections") = 128,
      py::arg("seed") = 0);

  py::class_<TransitionMoments>(m, "TransitionMoments")
      .def_readonly("mean", &TransitionMoments::mean)
      .def_readonly("cov", &TransitionMoments::cov);
  m.def(
      "dps_transition_moments",
      [](const Mat& sigma, const Vec& x_t, const InpaintingTask& task,
         double s, double t, const NoiseSchedule& ns, double eta) {
        return dps_transition_moments(sigma, x_t, task, s, t, ns, eta);
      },
      py::arg("sigma"), py::arg("x_t"), py::arg("task"), py::arg("s"),
      py::arg("t"), py::arg("noise_schedule"), py::arg("eta"));
  m.def(
      "ding_transition_moments",
      [](const Mat& sigma, const Vec& x_t, const InpaintingTask& task,
         double s, double t, const NoiseSchedule& ns, double eta) {
        return ding_transition_moments(sigma, x_t, task, s, t, ns, eta);
      },
      py::arg("sigma"), py::arg("x_t"), py::arg("task"), py::arg("s"),
      py::arg("t"), py::arg("noise_schedule"), py::arg("eta"));
  m.def("epsilon_and_bound", &epsilon_and_bound, py::arg("sigma"),
        py::arg("task"), py::arg("s"), py::arg("noise_schedule"));
  m.def("fit_order", &fit_order, py::arg("x"), py::arg("y"));
}
