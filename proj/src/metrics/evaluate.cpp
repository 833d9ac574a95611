#include <algorithm>

#include "dense/metrics.hpp"

namespace dense::metrics {

EvalResult evaluate(std::span<const float> est, std::span<const float> ref, std::span<const float> mix, int fs) {
  const std::size_t n = std::min({est.size(), ref.size(), mix.size()});
  est = est.first(n);
  ref = ref.first(n);
  mix = mix.first(n);
  EvalResult r;
  r.sdr_db = sdr(est, ref);
  r.sdri_db = r.sdr_db - sdr(mix, ref);
  r.si_sdr_db = si_sdr(est, ref);
  r.si_sdri_db = r.si_sdr_db - si_sdr(mix, ref);
  r.stoi = stoi(est, ref, fs);
  return r;
}

namespace {

double mean_of(std::vector<double> v) {
  double acc = 0.0;
  for (double x : v) acc += x;
  return acc / static_cast<double>(v.size());
}

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

}  // namespace

Aggregate aggregate(const std::vector<EvalResult>& results) {
  if (results.empty()) throw std::invalid_argument("aggregate: no results");
  Aggregate a;
  a.count = results.size();
  auto field = [&](double EvalResult::*member, auto reduce) {
    std::vector<double> v;
    for (const auto& r : results) v.push_back(r.*member);
    return reduce(std::move(v));
  };
  for (double EvalResult::*m : {&EvalResult::sdr_db, &EvalResult::sdri_db, &EvalResult::si_sdr_db,
                                &EvalResult::si_sdri_db, &EvalResult::stoi}) {
    a.mean.*m = field(m, mean_of);
    a.median.*m = field(m, median_of);
  }
  return a;
}

void to_json(nlohmann::json& j, const EvalResult& r) {
  j = nlohmann::json{{"sdr_db", r.sdr_db},
                     {"sdri_db", r.sdri_db},
                     {"si_sdr_db", r.si_sdr_db},
                     {"si_sdri_db", r.si_sdri_db},
                     {"stoi", r.stoi}};
}

void to_json(nlohmann::json& j, const Aggregate& a) {
  j = nlohmann::json{{"count", a.count}, {"mean", a.mean}, {"median", a.median}};
}

}  // namespace dense::metrics
