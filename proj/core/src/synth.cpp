#include "tilepop/synth.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <nlohmann/json.hpp>
#include <thread>

#include "tilepop/error.hpp"
#include "tilepop/io.hpp"
#include "tilepop/random.hpp"
#include "tilepop/raster_io.hpp"

namespace tilepop {

using nlohmann::json;

namespace {

constexpr std::array<const char*, 8> kServiceNames{"Spotify", "GoogleMaps",  "Netflix", "Waze",
                                                   "Uber",    "GoogleMeet", "Twitter", "MicrosoftMail"};
constexpr std::array<bool, 8> kServiceDayWeighted{true, true, false, true, false, true, false, true};

// Rough share of people active in each 2-hour slot.
constexpr std::array<double, kSlots> kActivity{0.35, 0.15, 0.2, 0.6, 0.9, 1.0, 1.0, 1.0, 0.95, 0.9, 0.8, 0.6};

enum : std::uint64_t { kTagField = 1, kTagProfile = 2, kTagPropensity = 3, kTagFile = 4 };

std::uint64_t days_since_epoch(Date d) {
    return static_cast<std::uint64_t>(std::chrono::sys_days{d}.time_since_epoch().count());
}

std::size_t dir_index(Direction d) { return d == Direction::Upload ? 0 : 1; }

}  // namespace

void SynthConfig::validate() const {
    if (city.empty() || city.find('_') != std::string::npos) throw ValidationError("synth city name must be non-empty without '_'");
    if (coarse_factor == 0) throw ValidationError("coarse_factor must be positive");
    if (rows == 0 || cols == 0 || rows % coarse_factor != 0 || cols % coarse_factor != 0) {
        throw ValidationError("synth grid dimensions must be positive multiples of " + std::to_string(coarse_factor));
    }
    if (!(tile_size > 0.0)) throw ValidationError("tile_size must be positive");
    if (n_services == 0) throw ValidationError("n_services must be positive");
    if (std::chrono::sys_days{first_date} > std::chrono::sys_days{last_date}) throw ValidationError("empty date range");
    if (!(density > 0.0) || !(density_floor >= 0.0)) throw ValidationError("density parameters must be positive");
    if (!(bump_min_width > 0.0) || bump_max_width < bump_min_width) throw ValidationError("invalid bump widths");
    if (ring_radius <= center_radius) throw ValidationError("ring_radius must exceed center_radius");
    if (!(commuter_flow >= 0.0 && commuter_flow < 1.0)) throw ValidationError("commuter_flow must be in [0, 1)");
    if (!(inflow_share >= -1.0 && inflow_share <= 1.0)) throw ValidationError("inflow_share must be in [-1, 1]");
    if (!(sigma >= 0.0) || !(propensity_sigma >= 0.0)) throw ValidationError("noise levels must be non-negative");
    for (const auto& o : outages) {
        if (!(o.factor >= 0.0)) throw ValidationError("outage factor must be non-negative");
    }
}

std::vector<std::string> SynthConfig::service_names() const {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < n_services; ++i) {
        out.push_back(i < kServiceNames.size() ? std::string(kServiceNames[i]) : "Service" + std::to_string(i + 1));
    }
    return out;
}

IngestManifest SynthConfig::manifest() const {
    IngestManifest m;
    m.city = city;
    m.services = service_names();
    m.first_date = first_date;
    m.last_date = last_date;
    m.dst_date = dst_date;
    return m;
}

json synth_config_to_json(const SynthConfig& c) {
    json outages = json::array();
    for (const auto& o : c.outages) {
        outages.push_back({{"service", o.service}, {"date", format_iso_date(o.date)}, {"factor", o.factor}});
    }
    return {{"seed", c.seed},
            {"city", c.city},
            {"rows", c.rows},
            {"cols", c.cols},
            {"tile_size", c.tile_size},
            {"origin_lon", c.origin_lon},
            {"origin_lat", c.origin_lat},
            {"coarse_factor", c.coarse_factor},
            {"raster_margin", c.raster_margin},
            {"n_services", c.n_services},
            {"start_date", format_iso_date(c.first_date)},
            {"end_date", format_iso_date(c.last_date)},
            {"dst_date", format_iso_date(c.dst_date)},
            {"density", c.density},
            {"density_floor", c.density_floor},
            {"n_bumps", c.n_bumps},
            {"bump_min_width", c.bump_min_width},
            {"bump_max_width", c.bump_max_width},
            {"center_radius", c.center_radius},
            {"ring_radius", c.ring_radius},
            {"commuter_flow", c.commuter_flow},
            {"inflow_share", c.inflow_share},
            {"sigma", c.sigma},
            {"propensity_sigma", c.propensity_sigma},
            {"outages", std::move(outages)}};
}

SynthConfig synth_config_from_json(const json& j) {
    SynthConfig c;
    try {
        c.seed = j.value("seed", c.seed);
        c.city = j.value("city", c.city);
        c.rows = j.value("rows", c.rows);
        c.cols = j.value("cols", c.cols);
        c.tile_size = j.value("tile_size", c.tile_size);
        c.origin_lon = j.value("origin_lon", c.origin_lon);
        c.origin_lat = j.value("origin_lat", c.origin_lat);
        c.coarse_factor = j.value("coarse_factor", c.coarse_factor);
        c.raster_margin = j.value("raster_margin", c.raster_margin);
        c.n_services = j.value("n_services", c.n_services);
        if (j.contains("start_date")) c.first_date = parse_iso_date(j.at("start_date").get<std::string>());
        if (j.contains("end_date")) c.last_date = parse_iso_date(j.at("end_date").get<std::string>());
        if (j.contains("dst_date")) c.dst_date = parse_iso_date(j.at("dst_date").get<std::string>());
        c.density = j.value("density", c.density);
        c.density_floor = j.value("density_floor", c.density_floor);
        c.n_bumps = j.value("n_bumps", c.n_bumps);
        c.bump_min_width = j.value("bump_min_width", c.bump_min_width);
        c.bump_max_width = j.value("bump_max_width", c.bump_max_width);
        c.center_radius = j.value("center_radius", c.center_radius);
        c.ring_radius = j.value("ring_radius", c.ring_radius);
        c.commuter_flow = j.value("commuter_flow", c.commuter_flow);
        c.inflow_share = j.value("inflow_share", c.inflow_share);
        c.sigma = j.value("sigma", c.sigma);
        c.propensity_sigma = j.value("propensity_sigma", c.propensity_sigma);
        if (j.contains("outages")) {
            for (const json& o : j.at("outages")) {
                c.outages.push_back({o.at("service").get<std::string>(), parse_iso_date(o.at("date").get<std::string>()),
                                     o.value("factor", 0.05)});
            }
        }
    } catch (const json::exception& e) {
        throw ValidationError(std::string("invalid synth config: ") + e.what());
    }
    c.validate();
    return c;
}

double SynthTruth::profile(std::size_t service, Direction dir, DayType dt, std::size_t slot) const {
    return profiles[((service * 2 + dir_index(dir)) * kDayTypes.size() + static_cast<std::size_t>(dt)) * kSlots + slot];
}

PopulationVector SynthTruth::population(Period p) const {
    return {p, tile_ids, p == Period::Night ? night : day};
}

double day_share(std::size_t slot) {
    static constexpr std::array<double, kSlots> share{0.0, 0.0, 0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0,
                                                      1.0, 1.0, 1.0, 2.0 / 3.0, 1.0 / 3.0, 0.0};
    return share.at(slot);
}

namespace {

std::size_t chebyshev_to_center(std::size_t r, std::size_t c, std::size_t nr, std::size_t nc) {
    const auto dr = static_cast<std::ptrdiff_t>(r) - static_cast<std::ptrdiff_t>(nr / 2);
    const auto dc = static_cast<std::ptrdiff_t>(c) - static_cast<std::ptrdiff_t>(nc / 2);
    return static_cast<std::size_t>(std::max(std::abs(dr), std::abs(dc)));
}

std::vector<double> gen_profiles(const SynthConfig& cfg, std::vector<bool>& day_weighted) {
    SplitMix64 rng(derive_seed(cfg.seed, {kTagProfile}));
    std::vector<double> out;
    out.reserve(cfg.n_services * 2 * kDayTypes.size() * kSlots);
    day_weighted.clear();
    for (std::size_t s = 0; s < cfg.n_services; ++s) {
        const bool dw = s < kServiceDayWeighted.size() ? kServiceDayWeighted[s] : (s % 2 == 1);
        day_weighted.push_back(dw);
        const double scale = std::exp(rng.uniform(std::log(0.5), std::log(5.0)));  // MB per person per slot
        const double upload_ratio = rng.uniform(0.05, 0.3);
        const double weekend = dw ? rng.uniform(0.4, 0.8) : rng.uniform(1.0, 1.4);
        for (std::size_t dir = 0; dir < 2; ++dir) {
            const double dscale = dir == 0 ? scale * upload_ratio : scale;
            for (DayType dt : kDayTypes) {
                const bool is_weekend = dt == DayType::Saturday || dt == DayType::Sunday;
                for (std::size_t t = 0; t < kSlots; ++t) {
                    double shape = kActivity[t];
                    if (dw && t >= 4 && t <= 9) shape *= 2.0;
                    if (!dw && (t >= 10 || t == 0)) shape *= 2.0;
                    if (is_weekend && t >= 4 && t <= 9) shape *= weekend;
                    shape *= std::exp(0.1 * rng.normal());
                    out.push_back(dscale * shape);
                }
            }
        }
    }
    return out;
}

}  // namespace

SynthCity gen_city(const SynthConfig& cfg) {
    cfg.validate();
    const std::size_t n = cfg.rows * cfg.cols;
    std::vector<Tile> tiles;
    tiles.reserve(n);
    SynthCity city;
    SynthTruth& truth = city.truth;
    truth.services = cfg.service_names();
    truth.tile_ids.reserve(n);
    for (std::size_t r = 0; r < cfg.rows; ++r) {
        const double y0 = cfg.origin_lat + static_cast<double>(r) * cfg.tile_size;
        const double y1 = cfg.origin_lat + static_cast<double>(r + 1) * cfg.tile_size;
        for (std::size_t c = 0; c < cfg.cols; ++c) {
            const double x0 = cfg.origin_lon + static_cast<double>(c) * cfg.tile_size;
            const double x1 = cfg.origin_lon + static_cast<double>(c + 1) * cfg.tile_size;
            const TileId id{r * cfg.cols + c};
            tiles.push_back({id, {{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}, {x0, y0}}});
            truth.tile_ids.push_back(id);
        }
    }
    city.grid = CityGrid(cfg.city, std::move(tiles));

    // Night field.
    SplitMix64 rng(derive_seed(cfg.seed, {kTagField}));
    struct Bump {
        double r, c, width, amplitude;
    };
    std::vector<Bump> bumps;
    for (std::size_t k = 0; k < cfg.n_bumps; ++k) {
        Bump b;
        if (k == 0) {
            b.r = 0.5 * static_cast<double>(cfg.rows) + rng.uniform(-2.0, 2.0);
            b.c = 0.5 * static_cast<double>(cfg.cols) + rng.uniform(-2.0, 2.0);
        } else {
            b.r = rng.uniform(0.0, static_cast<double>(cfg.rows));
            b.c = rng.uniform(0.0, static_cast<double>(cfg.cols));
        }
        b.width = rng.uniform(cfg.bump_min_width, cfg.bump_max_width);
        b.amplitude = k == 0 ? 1.2 : rng.uniform(0.3, 0.9);
        bumps.push_back(b);
    }
    const std::size_t pad = cfg.raster_margin * cfg.coarse_factor;
    truth.field_rows = cfg.rows + 2 * pad;
    truth.field_cols = cfg.cols + 2 * pad;
    truth.field_night.resize(truth.field_rows * truth.field_cols);
    for (std::size_t fr = 0; fr < truth.field_rows; ++fr) {
        for (std::size_t fc = 0; fc < truth.field_cols; ++fc) {
            // City coordinates; the margin has negative or beyond-edge positions.
            const double pr = static_cast<double>(fr) - static_cast<double>(pad) + 0.5;
            const double pc = static_cast<double>(fc) - static_cast<double>(pad) + 0.5;
            double v = cfg.density_floor;
            for (const Bump& b : bumps) {
                const double d2 = (pr - b.r) * (pr - b.r) + (pc - b.c) * (pc - b.c);
                v += b.amplitude * std::exp(-d2 / (2.0 * b.width * b.width));
            }
            truth.field_night[fr * truth.field_cols + fc] = cfg.density * v;
        }
    }
    truth.night.resize(n);
    truth.zones.resize(n);
    const std::size_t ncr = cfg.rows / cfg.coarse_factor;
    const std::size_t ncc = cfg.cols / cfg.coarse_factor;
    for (std::size_t r = 0; r < cfg.rows; ++r) {
        for (std::size_t c = 0; c < cfg.cols; ++c) {
            const std::size_t i = r * cfg.cols + c;
            truth.night[i] = truth.field_night[(r + pad) * truth.field_cols + c + pad];
            const std::size_t d = chebyshev_to_center(r / cfg.coarse_factor, c / cfg.coarse_factor, ncr, ncc);
            truth.zones[i] = d <= cfg.center_radius ? Zone::Center : (d >= cfg.ring_radius ? Zone::Ring : Zone::Neutral);
        }
    }

    // Commuter redistribution: gains G in the center, losses L in the ring with
    // G + L = flow * N and G - L = inflow_share * flow * N.
    truth.day = truth.night;
    if (cfg.commuter_flow > 0.0) {
        double total = 0.0;
        double center = 0.0;
        double ring = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            total += truth.night[i];
            if (truth.zones[i] == Zone::Center) center += truth.night[i];
            if (truth.zones[i] == Zone::Ring) ring += truth.night[i];
        }
        const double gain = 0.5 * cfg.commuter_flow * total * (1.0 + cfg.inflow_share);
        const double loss = 0.5 * cfg.commuter_flow * total * (1.0 - cfg.inflow_share);
        if ((gain > 0.0 && !(center > 0.0)) || (loss > 0.0 && !(ring > 0.0))) {
            throw ValidationError("commuter zones are empty for this grid");
        }
        if (loss > ring) throw ValidationError("commuter flow exceeds the ring population");
        const double g = gain > 0.0 ? gain / center : 0.0;
        const double l = loss > 0.0 ? loss / ring : 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (truth.zones[i] == Zone::Center) truth.day[i] = truth.night[i] * (1.0 + g);
            if (truth.zones[i] == Zone::Ring) truth.day[i] = truth.night[i] * (1.0 - l);
        }
    }

    truth.field_day = truth.field_night;
    for (std::size_t r = 0; r < cfg.rows; ++r) {
        for (std::size_t c = 0; c < cfg.cols; ++c) {
            truth.field_day[(r + pad) * truth.field_cols + c + pad] = truth.day[r * cfg.cols + c];
        }
    }

    truth.profiles = gen_profiles(cfg, truth.day_weighted);

    SplitMix64 prng(derive_seed(cfg.seed, {kTagPropensity}));
    truth.propensity.resize(n * cfg.n_services * 2);
    for (double& p : truth.propensity) p = std::exp(cfg.propensity_sigma * prng.normal());
    return city;
}

TrafficMatrix gen_traffic(const SynthCity& city, const SynthConfig& cfg, const TrafficFileMeta& meta) {
    const SynthTruth& truth = city.truth;
    auto sit = std::find(truth.services.begin(), truth.services.end(), meta.service);
    if (sit == truth.services.end()) throw DataError("synthetic city has no service '" + meta.service + "'");
    const auto s = static_cast<std::size_t>(sit - truth.services.begin());
    const DayType dt = day_type_of(meta.date);
    const std::size_t dir = dir_index(meta.direction);

    double outage = 1.0;
    for (const auto& o : cfg.outages) {
        if (o.service == meta.service && o.date == meta.date) outage *= o.factor;
    }
    std::array<double, kSlots> w{};
    std::array<double, kSlots> share{};
    for (std::size_t t = 0; t < kSlots; ++t) {
        w[t] = truth.profile(s, meta.direction, dt, t) / static_cast<double>(kQuartersPerSlot) * outage;
        share[t] = day_share(t);
    }

    SplitMix64 rng(derive_seed(cfg.seed, {kTagFile, fnv1a64(meta.service), days_since_epoch(meta.date), dir}));
    TrafficMatrix m;
    m.meta = meta;
    m.tile_ids = truth.tile_ids;
    const std::size_t n = truth.tile_ids.size();
    m.values.resize(n * kQuarterHours);
    m.missing.assign(n * kQuarterHours, 0);
    for (std::size_t i = 0; i < n; ++i) {
        const double prop = truth.propensity[(i * cfg.n_services + s) * 2 + dir];
        const double pn = truth.night[i];
        const double pd = truth.day[i];
        double* row = m.values.data() + i * kQuarterHours;
        for (std::size_t t = 0; t < kSlots; ++t) {
            const double eps = cfg.sigma > 0.0 ? std::exp(cfg.sigma * rng.normal()) : 1.0;
            const double p = share[t] == 0.0 ? pn : (share[t] == 1.0 ? pd : pn + share[t] * (pd - pn));
            const double v = w[t] * p * prop * eps;
            std::fill_n(row + t * kQuartersPerSlot, kQuartersPerSlot, v);
        }
    }
    return m;
}

SlotMatrix SynthTrafficSource::load_day(const TrafficFileMeta& meta, Date dst_date) const {
    if (meta.city != cfg_.city) throw DataError("synthetic source serves city '" + cfg_.city + "' only");
    return aggregate_to_slots(apply_dst_correction(gen_traffic(city_, cfg_, meta), dst_date));
}

CoarseRaster gen_coarse_raster(const SynthCity& city, const SynthConfig& cfg, Period period) {
    cfg.validate();
    const SynthTruth& t = city.truth;
    const auto& src = period == Period::Night ? t.field_night : t.field_day;
    const std::size_t cf = cfg.coarse_factor;
    if (t.field_rows != cfg.rows + 2 * cfg.raster_margin * cf || t.field_cols != cfg.cols + 2 * cfg.raster_margin * cf ||
        src.size() != t.field_rows * t.field_cols) {
        throw ValidationError("truth does not match the configured grid");
    }
    CoarseRaster r;
    r.cell_size = cfg.tile_size * static_cast<double>(cf);
    r.xll = cfg.origin_lon - static_cast<double>(cfg.raster_margin) * r.cell_size;
    r.yll = cfg.origin_lat - static_cast<double>(cfg.raster_margin) * r.cell_size;
    r.nrows = t.field_rows / cf;
    r.ncols = t.field_cols / cf;
    r.values.assign(r.nrows * r.ncols, 0.0);
    for (std::size_t row = 0; row < t.field_rows; ++row) {
        for (std::size_t col = 0; col < t.field_cols; ++col) r.at(row / cf, col / cf) += src[row * t.field_cols + col];
    }
    return r;
}

bool is_informative_key(const FeatureKey& key) { return day_share(key.slot) == 1.0; }

json truth_to_json(const SynthCity& city, const SynthConfig& cfg) {
    const SynthTruth& t = city.truth;
    std::vector<std::uint64_t> ids;
    for (TileId id : t.tile_ids) ids.push_back(id.value);
    std::vector<int> zones;
    for (Zone z : t.zones) zones.push_back(static_cast<int>(z));
    json services = json::array();
    for (std::size_t s = 0; s < t.services.size(); ++s) {
        json dirs = json::object();
        for (Direction d : kDirections) {
            json by_type = json::object();
            for (DayType dt : kDayTypes) {
                std::vector<double> w;
                for (std::size_t slot = 0; slot < kSlots; ++slot) w.push_back(t.profile(s, d, dt, slot));
                by_type[std::string(day_type_name(dt))] = w;
            }
            dirs[std::string(direction_token(d))] = std::move(by_type);
        }
        services.push_back({{"name", t.services[s]}, {"day_weighted", static_cast<bool>(t.day_weighted[s])},
                            {"profile", std::move(dirs)}});
    }
    return {{"config", synth_config_to_json(cfg)},
            {"tile_ids", ids},
            {"night", t.night},
            {"day", t.day},
            {"zones", zones},
            {"zone_codes", {{"neutral", 0}, {"center", 1}, {"ring", 2}}},
            {"services", std::move(services)},
            {"propensity", t.propensity},
            {"informative_slots", {5, 6, 7, 8}}};
}

SynthFiles write_synth_bundle(const SynthCity& city, const SynthConfig& cfg, const std::filesystem::path& dir,
                              bool with_traffic, unsigned threads) {
    SynthFiles files{dir / "city.geojson", dir / "traffic",         dir / "night.asc",
                     dir / "day.asc",      dir / "truth.json",      dir / "manifest.json"};
    write_file(files.geojson, serialize_city_geojson(city.grid));
    write_file(files.night_raster, write_esri_ascii(gen_coarse_raster(city, cfg, Period::Night)));
    write_file(files.day_raster, write_esri_ascii(gen_coarse_raster(city, cfg, Period::Day)));
    write_file(files.truth, truth_to_json(city, cfg).dump());
    write_file(files.manifest, manifest_to_json(cfg.manifest()).dump(2) + "\n");
    if (!with_traffic) return files;

    std::filesystem::create_directories(files.traffic_dir);
    std::vector<TrafficFileMeta> metas;
    for (const auto& s : city.truth.services) {
        for (const Date& d : date_range(cfg.first_date, cfg.last_date)) {
            for (Direction dirn : kDirections) metas.push_back({cfg.city, s, d, dirn});
        }
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= metas.size()) return;
            try {
                write_file(files.traffic_dir / traffic_file_name(metas[i]),
                           format_traffic_file(gen_traffic(city, cfg, metas[i])));
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                next = metas.size();
                return;
            }
        }
    };
    threads = std::max(1u, threads);
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned k = 0; k < threads; ++k) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (failure) std::rethrow_exception(failure);
    return files;
}

}  // namespace tilepop
