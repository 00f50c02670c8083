#include "cslc/io.hpp"

#include <cstring>
#include <fstream>

namespace cslc {

namespace {

constexpr char kMagic[8] = {'C', 'S', 'L', 'C', 'F', 'L', 'D', '1'};

void put_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff), static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff), static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) | (static_cast<uint32_t>(b[2]) << 16) |
           (static_cast<uint32_t>(b[3]) << 24);
}

} // namespace

void write_field_container(const std::string& path, const FieldStack& fields) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open for writing: " + path);
    os.write(kMagic, 8);
    put_u32(os, static_cast<uint32_t>(fields.count()));
    put_u32(os, static_cast<uint32_t>(fields.side()));
    put_u32(os, static_cast<uint32_t>(fields.side()));
    static_assert(sizeof(double) == 8);
    const auto& raw = fields.raw();
    os.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size() * 8));
    if (!os) throw DataError("write failed: " + path);
}

FieldStack read_field_container(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open: " + path);
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kMagic, 8) != 0) throw DataError("not a CSLCFLD1 container: " + path);
    uint32_t n = get_u32(is), h = get_u32(is), w = get_u32(is);
    if (!is || h != w) throw DataError("malformed container header (h != w): " + path);
    FieldStack out(static_cast<int>(n), static_cast<int>(h));
    auto& raw = out.raw();
    is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size() * 8));
    if (!is) throw DataError("container truncated: " + path);
    char extra;
    if (is.read(&extra, 1)) throw DataError("container has trailing bytes: " + path);
    return out;
}

namespace {

nlohmann::json bumps_to_json(const BumpBasis& b) {
    return {{"centers", b.centers}, {"widths", b.widths}, {"amp", b.amp}};
}

BumpBasis bumps_from_json(const nlohmann::json& j) {
    BumpBasis b;
    b.centers = j.at("centers").get<std::vector<double>>();
    b.widths = j.at("widths").get<std::vector<double>>();
    b.amp = j.at("amp").get<double>();
    return b;
}

} // namespace

nlohmann::json solve_report_to_json(const SolveReport& r) {
    return {{"m", r.m},
            {"n", r.n},
            {"kappa_before", r.kappa_before},
            {"kappa_after", r.kappa_after},
            {"ridge", r.ridge},
            {"residual", r.residual},
            {"dropped", r.dropped},
            {"warned_m_ge_n", r.warned_m_ge_n}};
}

namespace {

SolveReport solve_report_from_json(const nlohmann::json& j) {
    SolveReport r;
    r.m = j.at("m").get<int>();
    r.n = j.at("n").get<long>();
    r.kappa_before = j.at("kappa_before").get<double>();
    r.kappa_after = j.at("kappa_after").get<double>();
    r.ridge = j.at("ridge").get<double>();
    r.residual = j.at("residual").get<double>();
    r.dropped = j.at("dropped").get<std::vector<int>>();
    r.warned_m_ge_n = j.at("warned_m_ge_n").get<bool>();
    return r;
}

} // namespace

nlohmann::json report_to_json(const LearnReport& report) {
    nlohmann::json scales = nlohmann::json::array();
    for (const auto& s : report.scales) scales.push_back(solve_report_to_json(s));
    return {{"scales", scales}, {"coarse", solve_report_to_json(report.coarse)}};
}

nlohmann::json model_to_json(const LearnedModel& model) {
    nlohmann::json j;
    j["format_version"] = 1;
    j["plan"] = {{"side", model.plan.side()},
                 {"j_oct", model.plan.octaves()},
                 {"m", model.plan.refinement()},
                 {"filter", model.plan.filter_name()}};
    nlohmann::json bands = nlohmann::json::array();
    for (int b = 1; b <= model.plan.n_bands(); ++b) {
        const BandSpec& spec = model.plan.band(b);
        bands.push_back({{"octave", spec.octave},
                         {"leaf_side", spec.leaf_side},
                         {"grid_side", spec.grid_side},
                         {"rep_side", spec.rep_side},
                         {"centroid", spec.centroid},
                         {"sub_bands", spec.leaves.size()}});
    }
    j["plan"]["bands"] = bands;
    j["preprocess"] = {{"type", model.preprocess.type}, {"offset", model.preprocess.offset}};

    nlohmann::json conds = nlohmann::json::array();
    for (const auto& c : model.cond) {
        nlohmann::json entries = nlohmann::json::array();
        for (const auto& e : c.idx.entries) entries.push_back({e.k, e.l, e.dk, e.di0, e.di1});
        conds.push_back({{"j", c.j},
                         {"entries", entries},
                         {"n_scalar", c.idx.n_scalar},
                         {"theta", c.theta},
                         {"bumps", bumps_to_json(c.bumps)},
                         {"marginal_percentiles", c.marginal_percentiles}});
    }
    j["conditionals"] = conds;

    nlohmann::json offsets = nlohmann::json::array();
    for (auto [a, b] : model.coarse.idx.offsets) offsets.push_back({a, b});
    j["coarse"] = {{"offsets", offsets},
                   {"n_scalar", model.coarse.idx.n_scalar},
                   {"theta", model.coarse.theta},
                   {"bumps", bumps_to_json(model.coarse.bumps)},
                   {"marginal_percentiles", model.coarse.marginal_percentiles},
                   {"init_mean", model.coarse_mean},
                   {"init_std", model.coarse_std}};
    j["report"] = report_to_json(model.report);
    return j;
}

LearnedModel model_from_json(const nlohmann::json& j) {
    if (j.at("format_version").get<int>() != 1) throw DataError("unsupported model format version");
    const auto& pj = j.at("plan");
    PacketPlan plan(pj.at("side").get<int>(), pj.at("j_oct").get<int>(), pj.at("m").get<int>(),
                    pj.at("filter").get<std::string>());
    if (pj.contains("bands")) {
        const auto& bands = pj.at("bands");
        if (static_cast<int>(bands.size()) != plan.n_bands()) throw DataError("model plan does not match this build");
        for (int b = 1; b <= plan.n_bands(); ++b)
            if (bands[static_cast<size_t>(b - 1)].at("sub_bands").get<size_t>() != plan.band(b).leaves.size())
                throw DataError("model band layout does not match this build");
    }

    LearnedModel model{plan, {}, {}, 0.0, 1.0, {}, {}};
    model.preprocess.type = j.at("preprocess").at("type").get<std::string>();
    model.preprocess.offset = j.at("preprocess").at("offset").get<double>();

    for (const auto& cj : j.at("conditionals")) {
        ConditionalEnergyParams c;
        c.j = cj.at("j").get<int>();
        for (const auto& ej : cj.at("entries")) {
            CouplingEntry e;
            e.k = ej[0].get<int>();
            e.l = ej[1].get<int>();
            e.dk = ej[2].get<int>();
            e.di0 = ej[3].get<int>();
            e.di1 = ej[4].get<int>();
            c.idx.entries.push_back(e);
        }
        c.idx.n_scalar = cj.at("n_scalar").get<int>();
        c.theta = cj.at("theta").get<std::vector<double>>();
        c.bumps = bumps_from_json(cj.at("bumps"));
        c.marginal_percentiles = cj.at("marginal_percentiles").get<std::vector<double>>();
        if (c.theta.size() != static_cast<size_t>(c.idx.m())) throw DataError("model theta length mismatch");
        model.cond.push_back(std::move(c));
    }
    if (static_cast<int>(model.cond.size()) != plan.n_bands()) throw DataError("model scale count mismatch");

    const auto& coj = j.at("coarse");
    for (const auto& oj : coj.at("offsets")) model.coarse.idx.offsets.emplace_back(oj[0].get<int>(), oj[1].get<int>());
    model.coarse.idx.n_scalar = coj.at("n_scalar").get<int>();
    model.coarse.theta = coj.at("theta").get<std::vector<double>>();
    model.coarse.bumps = bumps_from_json(coj.at("bumps"));
    model.coarse.marginal_percentiles = coj.at("marginal_percentiles").get<std::vector<double>>();
    model.coarse_mean = coj.at("init_mean").get<double>();
    model.coarse_std = coj.at("init_std").get<double>();

    if (j.contains("report")) {
        for (const auto& sj : j.at("report").at("scales")) model.report.scales.push_back(solve_report_from_json(sj));
        model.report.coarse = solve_report_from_json(j.at("report").at("coarse"));
    }
    return model;
}

void save_model(const std::string& path, const LearnedModel& model) { write_json(path, model_to_json(model)); }

LearnedModel load_model(const std::string& path) { return model_from_json(read_json(path)); }

nlohmann::json free_energy_to_json(const FreeEnergyParams& fe) {
    nlohmann::json offsets = nlohmann::json::array();
    for (auto [a, b] : fe.idx.offsets) offsets.push_back({a, b});
    return {{"j", fe.j},
            {"offsets", offsets},
            {"n_scalar", fe.idx.n_scalar},
            {"theta", fe.theta},
            {"bumps", bumps_to_json(fe.bumps)},
            {"marginal_percentiles", fe.marginal_percentiles},
            {"report", solve_report_to_json(fe.report)}};
}

FreeEnergyParams free_energy_from_json(const nlohmann::json& j) {
    FreeEnergyParams fe;
    fe.j = j.at("j").get<int>();
    for (const auto& oj : j.at("offsets")) fe.idx.offsets.emplace_back(oj[0].get<int>(), oj[1].get<int>());
    fe.idx.n_scalar = j.at("n_scalar").get<int>();
    fe.theta = j.at("theta").get<std::vector<double>>();
    fe.bumps = bumps_from_json(j.at("bumps"));
    fe.marginal_percentiles = j.at("marginal_percentiles").get<std::vector<double>>();
    fe.report = solve_report_from_json(j.at("report"));
    return fe;
}

void write_json(const std::string& path, const nlohmann::json& j) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot open for writing: " + path);
    os << j.dump(2) << "\n";
    if (!os) throw DataError("write failed: " + path);
}

nlohmann::json read_json(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open: " + path);
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("invalid JSON in ") + path + ": " + e.what());
    }
    return j;
}

} // namespace cslc
