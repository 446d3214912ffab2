#include "bitalloc/mlu.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "bitalloc/io.hpp"

namespace bitalloc {

namespace {

Eigen::ArrayXXd activate(const Eigen::ArrayXXd& z, Activation act) {
  if (act == Activation::linear) return z;
  return 1.0 / (1.0 + (-z).exp());
}

}  // namespace

MlpModel init_mlp(Eigen::Index in, Eigen::Index hidden, Eigen::Index out,
                  std::uint64_t seed, Activation hidden_activation) {
  MlpModel m;
  m.hidden_activation = hidden_activation;
  m.w1.resize(hidden, in);
  m.b1 = Eigen::VectorXd::Zero(hidden);
  m.w2.resize(out, hidden);
  m.b2 = Eigen::VectorXd::Zero(out);
  Rng rng(seed);
  const double bound1 = std::sqrt(6.0 / static_cast<double>(in + hidden));
  for (Eigen::Index r = 0; r < hidden; ++r)
    for (Eigen::Index c = 0; c < in; ++c) m.w1(r, c) = rng.uniform(-bound1, bound1);
  const double bound2 = std::sqrt(6.0 / static_cast<double>(hidden + out));
  for (Eigen::Index r = 0; r < out; ++r)
    for (Eigen::Index c = 0; c < hidden; ++c) m.w2(r, c) = rng.uniform(-bound2, bound2);
  return m;
}

double forward(const MlpModel& model, Eigen::Ref<const Eigen::VectorXd> x) {
  if (!x.allFinite()) throw std::invalid_argument("non-finite input");
  if (x.size() != model.in_dim()) throw std::invalid_argument("dimension mismatch");
  if (model.out_dim() != 1) throw std::invalid_argument("scalar forward needs out_dim 1");
  Eigen::ArrayXd h = (model.w1 * x + model.b1).array();
  if (model.hidden_activation == Activation::sigmoid) h = 1.0 / (1.0 + (-h).exp());
  return (model.w2 * h.matrix() + model.b2)(0);
}

RowMatrixXd forward_batch(const MlpModel& model, Eigen::Ref<const RowMatrixXd> x) {
  if (!x.allFinite()) throw std::invalid_argument("non-finite input");
  if (x.cols() != model.in_dim()) throw std::invalid_argument("dimension mismatch");
  Eigen::ArrayXXd h =
      ((x * model.w1.transpose()).rowwise() + model.b1.transpose()).array();
  h = activate(h, model.hidden_activation);
  RowMatrixXd out =
      (h.matrix() * model.w2.transpose()).rowwise() + model.b2.transpose();
  return out;
}

double mean_squared_error(const MlpModel& model, Eigen::Ref<const RowMatrixXd> inputs,
                          Eigen::Ref<const Eigen::VectorXd> targets) {
  const RowMatrixXd pred = forward_batch(model, inputs);
  return (pred.col(0) - targets).squaredNorm() / static_cast<double>(targets.size());
}

MlpGradients backprop(const MlpModel& model, Eigen::Ref<const RowMatrixXd> inputs,
                      Eigen::Ref<const Eigen::VectorXd> targets) {
  const Eigen::Index n = inputs.rows();
  if (n == 0) throw std::invalid_argument("empty batch");
  if (model.out_dim() != 1) throw std::invalid_argument("backprop needs out_dim 1");

  // Forward with cached hidden activations.
  Eigen::ArrayXXd h =
      ((inputs * model.w1.transpose()).rowwise() + model.b1.transpose()).array();
  h = activate(h, model.hidden_activation);
  const Eigen::VectorXd pred =
      (h.matrix() * model.w2.transpose()).col(0) + Eigen::VectorXd::Constant(n, model.b2(0));

  // L = (1/n) sum (pred - y)^2
  const Eigen::VectorXd dpred = 2.0 / static_cast<double>(n) * (pred - targets);

  MlpGradients g;
  g.w2 = dpred.transpose() * h.matrix();  // 1 x hidden
  g.b2 = Eigen::VectorXd::Constant(1, dpred.sum());

  Eigen::ArrayXXd dh = (dpred * model.w2).array();  // n x hidden
  if (model.hidden_activation == Activation::sigmoid) dh *= h * (1.0 - h);
  g.w1 = dh.matrix().transpose() * inputs;  // hidden x in
  g.b1 = dh.matrix().colwise().sum().transpose();
  return g;
}

DemoData generate_lqr_dataset(int n_train_sequences, int n_test_sequences,
                              int seq_len, std::uint64_t seed) {
  if (n_train_sequences < 1 || n_test_sequences < 0 || seq_len < 1)
    throw std::invalid_argument("invalid dataset shape");

  DemoData out;
  int redraws = 0;

  auto fill = [&](DemoDataset& ds, int n_sequences, std::uint64_t base_index) {
    ds.n_sequences = n_sequences;
    ds.seq_len = seq_len;
    ds.inputs.resize(static_cast<Eigen::Index>(n_sequences) * seq_len, 6);
    ds.targets.resize(static_cast<Eigen::Index>(n_sequences) * seq_len);
    for (int s = 0; s < n_sequences; ++s) {
      Rng rng = Rng::substream(seed, base_index + static_cast<std::uint64_t>(s));
      PlantParams params;
      LqrDesign design;
      Scenario sc;
      // A failed controller design (never seen with these weights, but the
      // solver can report non-convergence) skips the draw and tries again.
      for (;;) {
        sc = draw_scenario(rng);
        params.pendulum_mass = sc.pendulum_mass;
        params.length_to_com = sc.length_to_com;
        try {
          design = design_controller(params);
          break;
        } catch (const std::runtime_error&) {
          ++redraws;
        }
      }
      const auto controller = [&](const PlantState& st) {
        return design.force(st, kReferencePosition);
      };
      const Trajectory traj =
          rollout(params, controller, PlantState{0.0, sc.theta0, 0.0, 0.0},
                  seq_len * kControlDt, kControlDt);
      for (int t = 0; t < seq_len; ++t) {
        const Eigen::Index row = static_cast<Eigen::Index>(s) * seq_len + t;
        const PlantState& st = traj.states[static_cast<std::size_t>(t)];
        ds.inputs.row(row) << params.pendulum_mass, params.length_to_com, st.r,
            st.theta, st.v, st.q;
        ds.targets[row] = traj.forces[static_cast<std::size_t>(t)];
      }
    }
  };

  fill(out.train, n_train_sequences, 0);
  fill(out.test, n_test_sequences, static_cast<std::uint64_t>(n_train_sequences));
  out.lqr_redraws = redraws;
  return out;
}

TrainResult train_mlp(const DemoDataset& data, const TrainConfig& cfg) {
  if (data.inputs.rows() == 0) throw std::invalid_argument("empty dataset");
  if (data.inputs.rows() != data.targets.size())
    throw std::invalid_argument("inputs/targets mismatch");
  if (cfg.validation_ratio <= 0.0 || cfg.validation_ratio >= 1.0)
    throw std::invalid_argument("validation ratio out of (0,1)");

  // Hold out whole sequences for validation so correlated in-sequence rows
  // never straddle the split.
  int n_seq = static_cast<int>(data.inputs.rows());
  int seq_len = 1;
  if (data.n_sequences > 0) {
    if (data.inputs.rows() % data.n_sequences != 0)
      throw std::invalid_argument("rows not divisible by sequence count");
    n_seq = data.n_sequences;
    seq_len = static_cast<int>(data.inputs.rows() / data.n_sequences);
  }
  std::vector<int> seq_index(static_cast<std::size_t>(n_seq));
  std::iota(seq_index.begin(), seq_index.end(), 0);
  Rng split_rng = Rng::substream(cfg.seed, 0xa11u);
  split_rng.shuffle(seq_index);
  const int n_val_seq =
      std::max(1, static_cast<int>(std::lround(cfg.validation_ratio * n_seq)));
  if (n_val_seq >= n_seq) throw std::invalid_argument("validation split leaves no train data");

  const Eigen::Index train_rows = static_cast<Eigen::Index>(n_seq - n_val_seq) * seq_len;
  const Eigen::Index val_rows = static_cast<Eigen::Index>(n_val_seq) * seq_len;
  RowMatrixXd train_x(train_rows, data.inputs.cols());
  Eigen::VectorXd train_y(train_rows);
  RowMatrixXd val_x(val_rows, data.inputs.cols());
  Eigen::VectorXd val_y(val_rows);
  for (int i = 0; i < n_seq; ++i) {
    const Eigen::Index src = static_cast<Eigen::Index>(seq_index[static_cast<std::size_t>(i)]) * seq_len;
    if (i < n_seq - n_val_seq) {
      const Eigen::Index dst = static_cast<Eigen::Index>(i) * seq_len;
      train_x.middleRows(dst, seq_len) = data.inputs.middleRows(src, seq_len);
      train_y.segment(dst, seq_len) = data.targets.segment(src, seq_len);
    } else {
      const Eigen::Index dst = static_cast<Eigen::Index>(i - (n_seq - n_val_seq)) * seq_len;
      val_x.middleRows(dst, seq_len) = data.inputs.middleRows(src, seq_len);
      val_y.segment(dst, seq_len) = data.targets.segment(src, seq_len);
    }
  }

  TrainResult result;
  MlpModel model = init_mlp(data.inputs.cols(), cfg.hidden_units, 1, cfg.seed);
  result.model = model;
  result.best_val_mse = mean_squared_error(model, val_x, val_y);
  result.best_epoch = 0;

  std::vector<Eigen::Index> order(static_cast<std::size_t>(train_rows));
  std::iota(order.begin(), order.end(), 0);
  Rng shuffle_rng = Rng::substream(cfg.seed, 0x5482u);

  int stale = 0;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double epoch_loss = 0.0;
    Eigen::Index covered = 0;
    for (Eigen::Index start = 0; start < train_rows; start += cfg.batch_size) {
      const Eigen::Index bsize = std::min<Eigen::Index>(cfg.batch_size, train_rows - start);
      RowMatrixXd bx(bsize, train_x.cols());
      Eigen::VectorXd by(bsize);
      for (Eigen::Index i = 0; i < bsize; ++i) {
        bx.row(i) = train_x.row(order[static_cast<std::size_t>(start + i)]);
        by[i] = train_y[order[static_cast<std::size_t>(start + i)]];
      }
      epoch_loss += mean_squared_error(model, bx, by) * static_cast<double>(bsize);
      covered += bsize;
      const MlpGradients g = backprop(model, bx, by);
      model.w1 -= cfg.learning_rate * g.w1;
      model.b1 -= cfg.learning_rate * g.b1;
      model.w2 -= cfg.learning_rate * g.w2;
      model.b2 -= cfg.learning_rate * g.b2;
    }
    const double train_mse = epoch_loss / static_cast<double>(covered);
    const double val_mse = mean_squared_error(model, val_x, val_y);
    if (!std::isfinite(train_mse) || !std::isfinite(val_mse))
      throw std::runtime_error("training diverged at epoch " + std::to_string(epoch));
    result.log.push_back({epoch, train_mse, val_mse});
    if (val_mse < result.best_val_mse) {
      result.best_val_mse = val_mse;
      result.best_epoch = epoch;
      result.model = model;
      stale = 0;
    } else if (++stale >= cfg.patience_epochs) {
      result.stopped_epoch = epoch;
      return result;
    }
  }
  result.stopped_epoch = cfg.max_epochs;
  return result;
}

void save_model(const MlpModel& model, const std::filesystem::path& path,
                const std::string& fingerprint) {
  nlohmann::json j;
  j["layers"] = {model.in_dim(), model.hidden_dim(), model.out_dim()};
  j["hidden_activation"] =
      model.hidden_activation == Activation::sigmoid ? "sigmoid" : "linear";
  auto dump = [](const Eigen::MatrixXd& m) {
    std::vector<double> v;
    v.reserve(static_cast<std::size_t>(m.size()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) v.push_back(m(r, c));
    return v;
  };
  j["w1"] = dump(model.w1);
  j["b1"] = std::vector<double>(model.b1.data(), model.b1.data() + model.b1.size());
  j["w2"] = dump(model.w2);
  j["b2"] = std::vector<double>(model.b2.data(), model.b2.data() + model.b2.size());
  if (!fingerprint.empty()) j["train_fingerprint"] = fingerprint;
  io::write_file_atomic(path, j.dump(2) + "\n");
}

MlpModel load_model(const std::filesystem::path& path) {
  const nlohmann::json j = nlohmann::json::parse(io::read_file(path));
  const auto layers = j.at("layers").get<std::vector<Eigen::Index>>();
  if (layers.size() != 3) throw std::runtime_error("model file: expected 3 layers");
  MlpModel m;
  m.hidden_activation = j.at("hidden_activation").get<std::string>() == "linear"
                            ? Activation::linear
                            : Activation::sigmoid;
  auto fill = [](Eigen::MatrixXd& mat, const std::vector<double>& v) {
    if (static_cast<Eigen::Index>(v.size()) != mat.size())
      throw std::runtime_error("model file: weight size mismatch");
    std::size_t i = 0;
    for (Eigen::Index r = 0; r < mat.rows(); ++r)
      for (Eigen::Index c = 0; c < mat.cols(); ++c) mat(r, c) = v[i++];
  };
  m.w1.resize(layers[1], layers[0]);
  fill(m.w1, j.at("w1").get<std::vector<double>>());
  const auto b1 = j.at("b1").get<std::vector<double>>();
  m.b1 = Eigen::Map<const Eigen::VectorXd>(b1.data(), static_cast<Eigen::Index>(b1.size()));
  m.w2.resize(layers[2], layers[1]);
  fill(m.w2, j.at("w2").get<std::vector<double>>());
  const auto b2 = j.at("b2").get<std::vector<double>>();
  m.b2 = Eigen::Map<const Eigen::VectorXd>(b2.data(), static_cast<Eigen::Index>(b2.size()));
  return m;
}

void save_demo_dataset(const DemoDataset& data, const std::filesystem::path& bin_path) {
  Dataset ds;
  ds.samples.resize(data.inputs.rows(), 7);
  ds.samples.leftCols(6) = data.inputs;
  ds.samples.col(6) = data.targets;
  ds.labels = kFeatureLabels;
  ds.labels.push_back("f");
  nlohmann::json extra;
  extra["sequences"] = data.n_sequences;
  extra["seq_len"] = data.seq_len;
  save_dataset(ds, bin_path, extra.dump());
}

DemoDataset load_demo_dataset(const std::filesystem::path& bin_path) {
  const Dataset ds = load_dataset(bin_path);
  if (ds.dim() != 7) throw std::runtime_error("demo dataset must have 7 columns");
  const nlohmann::json side =
      nlohmann::json::parse(io::read_file(bin_path.string() + ".json"));
  DemoDataset out;
  out.inputs = ds.samples.leftCols(6);
  out.targets = ds.samples.col(6);
  out.n_sequences = side.value("sequences", 0);
  out.seq_len = side.value("seq_len", 0);
  return out;
}

}  // namespace bitalloc
