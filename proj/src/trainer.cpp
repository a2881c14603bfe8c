#include "rsplat/trainer.hpp"

#include "rsplat/checkpoint.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>

namespace rsplat {

double camera_extent(const std::vector<const DatasetView*>& views) {
  require(!views.empty(), "camera_extent: no views");
  Vec3 c = Vec3::Zero();
  for (const auto* v : views) c += v->cam.center();
  c /= static_cast<double>(views.size());
  double r = 0;
  for (const auto* v : views) r = std::max(r, (v->cam.center() - c).norm());
  return 1.1 * std::max(r, 1e-6);
}

GaussianSet init_gaussians(const InitPoints& pts, int sh_degree, int embed_dim, int fourier_bands) {
  require(!pts.positions.empty() && pts.positions.size() == pts.colors.size(), "init_gaussians: bad points");
  const std::size_t n = pts.positions.size();
  GaussianSet gs(sh_degree, embed_dim);
  for (std::size_t i = 0; i < n; ++i) {
    // mean squared distance to the three nearest neighbours
    std::array<double, 3> best = {INFINITY, INFINITY, INFINITY};
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double d = (pts.positions[i] - pts.positions[j]).squaredNorm();
      if (d < best[2]) {
        best[2] = d;
        std::sort(best.begin(), best.end());
      }
    }
    double s = 0;
    int k = 0;
    for (double d : best)
      if (std::isfinite(d)) {
        s += d;
        ++k;
      }
    const double dist = k ? std::sqrt(std::max(s / k, 1e-14)) : 0.01;
    Gaussian3D g;
    g.position = pts.positions[i];
    g.log_scale = Vec3::Constant(std::log(dist));
    g.opacity_logit = logit(0.1);
    g.sh_coeffs.assign(sh_coeff_count(sh_degree), Vec3::Zero());
    g.sh_coeffs[0] = (pts.colors[i] - Vec3::Constant(0.5)) / kShC0;
    if (embed_dim > 0) g.gs_embedding = Eigen::VectorXd::Zero(embed_dim);
    gs.push_back(g);
  }
  if (embed_dim > 0) init_gaussian_embeddings(gs, fourier_bands);
  return gs;
}

Trainer::Trainer(RunConfig cfg, Dataset ds)
    : cfg_(std::move(cfg)), tog_(cfg_.effective_toggles()), ds_(std::move(ds)), extractor_(cfg_.feature_patch) {
  cfg_.validate();
  densify_ = cfg_.densify_schedule();
  cascade_ = cfg_.cascade_schedule();
  const auto train = ds_.train_views();
  if (train.empty()) throw ConfigError("dataset has no training views");
  extent_ = camera_extent(train);

  std::mt19937_64 master(cfg_.seed);
  view_rng_.seed(master());
  densify_rng_.seed(master());
  std::mt19937_64 mask_rng(master()), app_rng(master());

  gs_ = init_gaussians(ds_.points, cfg_.sh_degree, tog_.appearance ? cfg_.appearance.gaussian_dim : 0,
                       cfg_.appearance.fourier_bands);
  initial_count_ = gs_.size();
  moments_.m = GaussianSet::zeros_like(gs_);
  moments_.v = GaussianSet::zeros_like(gs_);
  accum_.resize(gs_.size());

  for (const auto* v : train) {
    ViewCache vc;
    vc.view = v;
    if (tog_.mask) {
      vc.gt_low = downsample(v->image, cascade_.low_res_factor);
      const Camera low = v->cam.scaled(cascade_.low_res_factor);
      if (vc.gt_low.width != low.width || vc.gt_low.height != low.height)
        throw ConfigError("image size must be divisible by cascade.low_res_factor");
      vc.feat_high = extractor_.extract(v->image);
      vc.feat_low = extractor_.extract(vc.gt_low);
      if (cfg_.feature_source == FeatureSource::file) {
        if (!v->features) throw ConfigError("mask.feature_source is 'file' but view " + v->name + " has no features");
        vc.input_high = vc.input_low = *v->features;
      } else {
        vc.input_high = vc.feat_high;
        vc.input_low = vc.feat_low;
      }
    }
    train_.push_back(std::move(vc));
  }
  if (tog_.mask) {
    mask_.emplace(train_.front().input_high.channels, cfg_.mask_hidden, mask_rng);
    mask_adam_ = AdamState(mask_->mlp().param_count(), cfg_.lr.mask_mlp);
  }
  if (tog_.appearance) {
    affine_mlp_ = make_appearance_mlp(cfg_.appearance, app_rng);
    affine_adam_ = AdamState(affine_mlp_.param_count(), cfg_.lr.affine_mlp);
    table_ = ImageEmbeddingTable(static_cast<int>(train_.size()), cfg_.appearance.image_dim,
                                 cfg_.appearance.image_init_std, app_rng);
    table_adam_ = AdamState(table_.data().size(), cfg_.lr.image_embedding);
  }
}

int Trainer::next_view() {
  if (epoch_cursor_ >= epoch_order_.size()) {
    epoch_order_.resize(train_.size());
    std::iota(epoch_order_.begin(), epoch_order_.end(), 0);
    std::shuffle(epoch_order_.begin(), epoch_order_.end(), view_rng_);
    epoch_cursor_ = 0;
  }
  return epoch_order_[epoch_cursor_++];
}

void Trainer::step() {
  if (done()) return;
  const long i = iter_;
  const int t = next_view();
  const ViewCache& vc = train_[t];
  const Image& gt = vc.view->image;
  const Camera& cam = vc.view->cam;
  const CascadePhase phase = cascade_phase(i, cascade_);

  std::optional<MaskForward> fwd;
  Image m_full;
  if (mask_) {
    fwd = mask_->forward(phase == CascadePhase::low ? vc.input_low : vc.input_high);
    m_full = upsample_cells(fwd->cells, fwd->grid_w, fwd->grid_h, gt.width, gt.height);
  }

  std::optional<AffineStage> stage;
  if (tog_.appearance) stage.emplace(affine_mlp_, table_.row(t), gs_);
  const RenderOutput out = render(gs_, cam, RenderMode::full_res(), stage ? &*stage : nullptr);
  const Image& c_aff = stage ? out.aux_image : out.image;
  const PhotometricLoss P = photometric_loss(c_aff, out.image, gt, mask_ ? &m_full : nullptr, cfg_.ssim_lambda);
  if (!std::isfinite(P.value))
    throw NumericError("non-finite photometric loss at iteration " + std::to_string(i), i);

  GaussianSet grads;
  if (stage) {
    grads = render_backward(out.tape, P.d_raw, &accum_, &P.d_affine, &*stage);
  } else {
    Image d = P.d_raw;
    for (std::size_t k = 0; k < d.data.size(); ++k) d.data[k] += P.d_affine.data[k];
    grads = render_backward(out.tape, d, &accum_);
  }

  last_step_ = {};
  last_step_.iter = i;
  last_step_.view_id = vc.view->id;
  last_step_.gaussian_count = gs_.size();
  last_step_.loss = P.value;
  last_step_.l1 = P.l1;
  last_step_.dssim = P.dssim;
  last_shape_.reset();
  if (mask_) last_step_.mask_objective = mask_step(vc, *fwd, out, t, phase);

  adam_gaussians(grads);
  if (stage) {
    affine_adam_.step(affine_mlp_.params(), stage->d_mlp);
    std::vector<double> d_table(table_.data().size(), 0.0);
    std::copy(stage->d_image_embedding.begin(), stage->d_image_embedding.end(),
              d_table.begin() + static_cast<std::ptrdiff_t>(t) * table_.dim());
    table_adam_.step(table_.data(), d_table);
  }

  const double pos_lr = exponential_lr(cfg_.lr.position_init * extent_, cfg_.lr.position_final * extent_, i,
                                       cfg_.total_iters);
  last_densify_ = densify_step(gs_, accum_, densify_, i, extent_, pos_lr, densify_rng_, &moments_, gt.width,
                               gt.height);
  opacity_reset(gs_, i, densify_, &moments_);
  iter_ = i + 1;
}

double Trainer::mask_step(const ViewCache& vc, const MaskForward& fwd, const RenderOutput& full, int t,
                          CascadePhase phase) {
  const bool app = tog_.appearance;
  Image raw, aff, low_render_aux;
  const Image* gt = nullptr;
  const FeatureMap* f_gt = nullptr;
  int extra = 1;
  if (phase == CascadePhase::low) {
    std::optional<AffineStage> st;
    if (app) st.emplace(affine_mlp_, table_.row(t), gs_);
    RenderOutput low = render(gs_, vc.view->cam, RenderMode::low_res(cascade_.low_res_factor), st ? &*st : nullptr);
    raw = std::move(low.image);
    if (app) aff = std::move(low.aux_image);
    gt = &vc.gt_low;
    f_gt = &vc.feat_low;
    extra = cascade_.residual_downsample;
  } else {
    raw = full.image;
    if (app) aff = full.aux_image;
    gt = &vc.view->image;
    f_gt = &vc.feat_high;
  }

  Image inlier;
  std::vector<double> m_cos;
  const FeatureMap f_raw = extractor_.extract(raw);
  if (app) {
    inlier = residual_target_min(raw, aff, *gt, cfg_.residual_rho, extra, cfg_.candidate_rule);
    m_cos = cosine_target_min(*f_gt, f_raw, extractor_.extract(aff), raw, aff, *gt, cfg_.candidate_rule);
  } else {
    inlier = residual_target(raw, *gt, cfg_.residual_rho, extra);
    m_cos = cosine_target(*f_gt, f_raw);
  }

  const Image m_res = upsample_cells(fwd.cells, fwd.grid_w, fwd.grid_h, inlier.width, inlier.height);
  const Image m_cell = upsample_cells(fwd.cells, fwd.grid_w, fwd.grid_h, f_gt->grid_w, f_gt->grid_h);
  const LossGrad l_res = loss_residual(m_res, inlier);
  const LossGrad l_cos = loss_cos(m_cell.data, m_cos);
  const MaskLossWeights& w = cfg_.mask_weights;
  const double w_reg = tog_.mr ? w.reg : 0.0;
  LossGrad l_reg;
  if (w_reg != 0) l_reg = loss_reg(m_res, iter_, cfg_.effective_beta_reg());

  Image d_res(inlier.width, inlier.height, 1), d_cell(f_gt->grid_w, f_gt->grid_h, 1);
  for (std::size_t k = 0; k < d_res.data.size(); ++k)
    d_res.data[k] = w.residual * l_res.grad[k] + (w_reg != 0 ? w_reg * l_reg.grad[k] : 0.0);
  for (std::size_t k = 0; k < d_cell.data.size(); ++k) d_cell.data[k] = w.cos * l_cos.grad[k];
  std::vector<double> d_cells = upsample_cells_backward(d_res, fwd.grid_w, fwd.grid_h);
  const std::vector<double> d2 = upsample_cells_backward(d_cell, fwd.grid_w, fwd.grid_h);
  for (std::size_t k = 0; k < d_cells.size(); ++k) d_cells[k] += d2[k];
  std::vector<double> d_params(mask_->mlp().param_count(), 0.0);
  mask_->backward(fwd, d_cells, d_params);
  mask_adam_.step(mask_->mlp().params(), d_params);

  SupervisionShape s;
  s.iter = iter_;
  s.phase = phase;
  s.render_w = raw.width;
  s.render_h = raw.height;
  s.residual_w = inlier.width;
  s.residual_h = inlier.height;
  s.feature_w = f_gt->grid_w;
  s.feature_h = f_gt->grid_h;
  s.input_w = fwd.grid_w;
  s.input_h = fwd.grid_h;
  last_shape_ = s;
  return mask_objective(l_res.value, l_cos.value, w_reg != 0 ? l_reg.value : 0.0,
                        {w.residual, w.cos, w_reg});
}

void Trainer::adam_gaussians(const GaussianSet& grads) {
  const long i = iter_;
  std::array<double, kParamGroupCount> lr{};
  lr[static_cast<int>(ParamGroup::position)] =
      exponential_lr(cfg_.lr.position_init * extent_, cfg_.lr.position_final * extent_, i, cfg_.total_iters);
  lr[static_cast<int>(ParamGroup::rotation)] = cfg_.lr.rotation;
  lr[static_cast<int>(ParamGroup::log_scale)] = cfg_.lr.scale;
  lr[static_cast<int>(ParamGroup::opacity)] = cfg_.lr.opacity;
  lr[static_cast<int>(ParamGroup::sh)] = cfg_.lr.sh;
  lr[static_cast<int>(ParamGroup::embedding)] = cfg_.lr.gaussian_embedding;
  for (int g = 0; g < kParamGroupCount; ++g) {
    const auto pg = static_cast<ParamGroup>(g);
    const auto gc = grads.column(pg);
    if (gc.empty()) continue;
    if (!std::all_of(gc.begin(), gc.end(), [](double v) { return std::isfinite(v); })) {
      ++skipped_[g];
      continue;
    }
    const long step = ++steps_[g];
    if (pg == ParamGroup::sh) {
      // higher SH bands use a 20x smaller rate, as in the reference implementation
      for (std::size_t r = 0; r < gs_.size(); ++r) {
        auto p = gs_.row(pg, r), m = moments_.m.row(pg, r), v = moments_.v.row(pg, r);
        const auto d = grads.row(pg, r);
        adam_update(p.first(3), d.first(3), m.first(3), v.first(3), lr[g], step);
        if (p.size() > 3)
          adam_update(p.subspan(3), d.subspan(3), m.subspan(3), v.subspan(3), lr[g] / 20.0, step);
      }
    } else {
      adam_update(gs_.column(pg), gc, moments_.m.column(pg), moments_.v.column(pg), lr[g], step);
    }
  }
  for (std::size_t r = 0; r < gs_.size(); ++r) {
    auto q = gs_.rotation(r);
    const double n = q.norm();
    if (n > 0) q /= n;
    else q = Vec4(1, 0, 0, 0);
  }
}

RenderOutput Trainer::render_view(const Camera& cam, std::span<const double> embedding) const {
  if (tog_.appearance && !embedding.empty()) return render_affine(gs_, affine_mlp_, embedding, cam);
  return render(gs_, cam);
}

Image Trainer::predict_train_mask(std::size_t t) const {
  require(t < train_.size(), "predict_train_mask: index out of range");
  const Image& img = train_[t].view->image;
  if (!mask_) return Image(img.width, img.height, 1, 1.0);
  return predict_mask(*mask_, train_[t].input_high, img.width, img.height);
}

EvalReport Trainer::evaluate_test() const {
  EvalReport rep;
  for (const auto* v : ds_.test_views()) {
    const Image& img = v->image;
    const Region region = cfg_.protocol == EvalProtocol::full ? Region::full(img.width, img.height)
                                                              : Region::right_half(img.width, img.height);
    Image pred;
    if (tog_.appearance) {
      std::vector<double> emb = table_.mean();
      if (cfg_.protocol == EvalProtocol::left_fit_right_eval)
        emb = testtime_fit_embedding(gs_, affine_mlp_, emb, v->cam, img, Region::left_half(img.width, img.height),
                                     {cfg_.testtime_steps, cfg_.testtime_lr});
      pred = render_affine(gs_, affine_mlp_, emb, v->cam).aux_image;
    } else {
      pred = render(gs_, v->cam).image;
    }
    ViewMetrics m;
    m.iter = iter_;
    m.view_id = v->id;
    m.psnr = psnr(pred, img, region);
    m.ssim = ssim(pred, img, region);
    m.gaussian_count = gs_.size();
    rep.rows.push_back(m);
  }
  rep.finalize();
  return rep;
}

EvalReport Trainer::evaluate_train() const {
  EvalReport rep;
  for (std::size_t t = 0; t < train_.size(); ++t) {
    const DatasetView& v = *train_[t].view;
    const Image pred = tog_.appearance ? render_affine(gs_, affine_mlp_, table_.row(static_cast<int>(t)), v.cam).aux_image
                                       : render(gs_, v.cam).image;
    ViewMetrics m;
    m.iter = iter_;
    m.view_id = v.id;
    m.psnr = psnr(pred, v.image);
    m.ssim = ssim(pred, v.image);
    m.gaussian_count = gs_.size();
    if (mask_) {
      const Image mask = predict_train_mask(t);
      m.static_fraction = static_fraction(mask);
      if (ds_.has_masks) {
        const MaskIou iou = mask_iou(mask, v.oracle_mask);
        m.iou_static = iou.iou_static;
        m.iou_transient = iou.iou_transient;
      }
    }
    rep.rows.push_back(m);
  }
  rep.finalize();
  return rep;
}

namespace {

std::string rng_state(const std::mt19937_64& r) {
  std::ostringstream os;
  os << r;
  return os.str();
}

void set_rng_state(std::mt19937_64& r, const std::string& s) {
  std::istringstream is(s);
  is >> r;
  if (!is) throw IoError("checkpoint: bad RNG state");
}

void put_set(BinaryWriter& w, const GaussianSet& s) {
  w.u64(s.size());
  for (int g = 0; g < kParamGroupCount; ++g) w.f64s(s.column(static_cast<ParamGroup>(g)));
}

void get_set(BinaryReader& r, GaussianSet& s, const std::string& src) {
  const std::size_t n = r.u64();
  GaussianSet out = GaussianSet::zeros_like(s, n);
  for (int g = 0; g < kParamGroupCount; ++g) {
    const auto v = r.f64s();
    auto col = out.column(static_cast<ParamGroup>(g));
    if (v.size() != col.size()) throw IoError(src + ": Gaussian table has the wrong width");
    std::copy(v.begin(), v.end(), col.begin());
  }
  s = std::move(out);
}

void put_adam(BinaryWriter& w, const AdamState& a) {
  w.f64(a.lr);
  w.i64(a.step_count);
  w.i64(a.skipped_steps);
  w.f64s(a.m);
  w.f64s(a.v);
}

void get_adam(BinaryReader& r, AdamState& a, const std::string& src) {
  const std::size_t n = a.m.size();
  a.lr = r.f64();
  a.step_count = r.i64();
  a.skipped_steps = r.i64();
  a.m = r.f64s();
  a.v = r.f64s();
  if (a.m.size() != n || a.v.size() != n) throw IoError(src + ": optimizer state has the wrong size");
}

void get_params(BinaryReader& r, std::span<double> dst, const std::string& src) {
  const auto v = r.f64s();
  if (v.size() != dst.size()) throw IoError(src + ": parameter block has the wrong size");
  std::copy(v.begin(), v.end(), dst.begin());
}

}  // namespace

std::string Trainer::checkpoint_bytes() const {
  BinaryWriter w;
  w.str(serialize_config(cfg_));
  w.i64(iter_);
  w.u64(initial_count_);
  w.str(rng_state(view_rng_));
  w.str(rng_state(densify_rng_));
  w.i64s(std::vector<long>(epoch_order_.begin(), epoch_order_.end()));
  w.u64(epoch_cursor_);
  put_set(w, gs_);
  put_set(w, moments_.m);
  put_set(w, moments_.v);
  w.i64s(std::vector<long>(steps_.begin(), steps_.end()));
  w.i64s(std::vector<long>(skipped_.begin(), skipped_.end()));
  w.f64s(accum_.grad_norm_sum);
  w.i64s(std::vector<long>(accum_.count.begin(), accum_.count.end()));
  w.f64s(accum_.max_radius);
  std::vector<double> pg;
  for (const Vec3& g : accum_.position_grad_sum) pg.insert(pg.end(), {g[0], g[1], g[2]});
  w.f64s(pg);
  w.u64(mask_ ? 1 : 0);
  if (mask_) {
    w.f64s(mask_->mlp().params());
    put_adam(w, mask_adam_);
  }
  w.u64(tog_.appearance ? 1 : 0);
  if (tog_.appearance) {
    w.f64s(affine_mlp_.params());
    put_adam(w, affine_adam_);
    w.f64s(table_.data());
    put_adam(w, table_adam_);
  }
  std::string out(kCheckpointMagic, 4);
  const std::uint32_t version = kCheckpointVersion;
  out.append(reinterpret_cast<const char*>(&version), 4);
  out += w.bytes();
  return out;
}

void Trainer::save_checkpoint(const std::filesystem::path& path) const { write_file_bytes(path, checkpoint_bytes()); }

void Trainer::load_checkpoint(const std::filesystem::path& path) {
  load_checkpoint_bytes(read_file_bytes(path), path.string());
}

void Trainer::load_checkpoint_bytes(const std::string& bytes, const std::string& src) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0)
    throw IoError(src + ": not a checkpoint file");
  std::uint32_t version;
  std::memcpy(&version, bytes.data() + 4, 4);
  if (version != kCheckpointVersion) throw IoError(src + ": unsupported checkpoint version " + std::to_string(version));
  BinaryReader r(bytes.substr(8), src);
  if (r.str() != serialize_config(cfg_))
    throw ConfigError(src + ": checkpoint was written with a different configuration");
  iter_ = r.i64();
  initial_count_ = r.u64();
  set_rng_state(view_rng_, r.str());
  set_rng_state(densify_rng_, r.str());
  const auto order = r.i64s();
  epoch_order_.assign(order.begin(), order.end());
  epoch_cursor_ = r.u64();
  get_set(r, gs_, src);
  get_set(r, moments_.m, src);
  get_set(r, moments_.v, src);
  if (moments_.m.size() != gs_.size() || moments_.v.size() != gs_.size()) throw IoError(src + ": moment rows mismatch");
  const auto st = r.i64s(), sk = r.i64s();
  if (st.size() != steps_.size() || sk.size() != skipped_.size()) throw IoError(src + ": bad step counters");
  std::copy(st.begin(), st.end(), steps_.begin());
  std::copy(sk.begin(), sk.end(), skipped_.begin());
  accum_.grad_norm_sum = r.f64s();
  const auto cnt = r.i64s();
  accum_.count.assign(cnt.begin(), cnt.end());
  accum_.max_radius = r.f64s();
  const auto pg = r.f64s();
  if (accum_.grad_norm_sum.size() != gs_.size() || accum_.count.size() != gs_.size() ||
      accum_.max_radius.size() != gs_.size() || pg.size() != 3 * gs_.size())
    throw IoError(src + ": accumulator rows mismatch");
  accum_.position_grad_sum.resize(gs_.size());
  for (std::size_t k = 0; k < gs_.size(); ++k) accum_.position_grad_sum[k] = Vec3(pg[3 * k], pg[3 * k + 1], pg[3 * k + 2]);
  if ((r.u64() != 0) != mask_.has_value()) throw IoError(src + ": mask model presence mismatch");
  if (mask_) {
    get_params(r, mask_->mlp().params(), src);
    get_adam(r, mask_adam_, src);
  }
  if ((r.u64() != 0) != tog_.appearance) throw IoError(src + ": appearance model presence mismatch");
  if (tog_.appearance) {
    get_params(r, affine_mlp_.params(), src);
    get_adam(r, affine_adam_, src);
    get_params(r, table_.data(), src);
    get_adam(r, table_adam_, src);
  }
  if (!r.at_end()) throw IoError(src + ": trailing bytes in checkpoint");
}

}  // namespace rsplat
