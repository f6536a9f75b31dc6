#include "rlalign/dataset.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "rlalign/image_io.hpp"

namespace rlalign {

namespace fs = std::filesystem;
using nlohmann::json;

std::string manifest_line(const ManifestEntry& e)
{
    json j;
    j["pair_id"] = e.pair_id;
    j["fixed"] = e.fixed;
    j["moving"] = e.moving;
    if (e.truth) {
        j["truth"] = {{"tx", e.truth->tx}, {"ty", e.truth->ty}, {"theta", e.truth->theta}};
    } else {
        j["truth"] = nullptr;
    }
    return j.dump();
}

ManifestEntry parse_manifest_line(const std::string& line)
{
    json j;
    try {
        j = json::parse(line);
    } catch (const json::exception& ex) {
        throw FormatError(std::string("manifest line is not JSON: ") + ex.what());
    }
    if (!j.is_object()) throw FormatError("manifest line must be a JSON object");
    ManifestEntry e;
    try {
        e.pair_id = j.at("pair_id").get<std::string>();
        e.fixed = j.at("fixed").get<std::string>();
        e.moving = j.at("moving").get<std::string>();
        if (j.contains("truth") && !j["truth"].is_null()) {
            const auto& t = j["truth"];
            e.truth = RigidTransform2D{t.at("tx").get<double>(), t.at("ty").get<double>(), t.at("theta").get<double>()};
        }
    } catch (const json::exception& ex) {
        throw FormatError(std::string("manifest entry malformed: ") + ex.what());
    }
    if (e.pair_id.empty()) throw FormatError("manifest entry has an empty pair_id");
    return e;
}

void write_manifest(const fs::path& path, const std::vector<ManifestEntry>& entries)
{
    std::ostringstream os;
    for (const auto& e : entries) os << manifest_line(e) << '\n';
    const std::string s = os.str();
    write_file_bytes(path, std::vector<unsigned char>(s.begin(), s.end()));
}

std::vector<ManifestEntry> read_manifest(const fs::path& path)
{
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest " + path.string());
    std::vector<ManifestEntry> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(parse_manifest_line(line));
        } catch (const FormatError& ex) {
            throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + ex.what());
        }
    }
    return out;
}

fs::path resolve_manifest(const fs::path& data)
{
    std::error_code ec;
    if (fs::is_directory(data, ec)) return data / kManifestName;
    return data;
}

std::vector<PairSample> load_pairs(const fs::path& manifest)
{
    const auto entries = read_manifest(manifest);
    const fs::path root = manifest.parent_path();
    std::vector<PairSample> out;
    out.reserve(entries.size());
    std::vector<std::string> missing;
    for (const auto& e : entries) {
        const fs::path f = root / e.fixed;
        const fs::path m = root / e.moving;
        bool ok = true;
        for (const auto& p : {f, m}) {
            std::error_code ec;
            if (!fs::is_regular_file(p, ec)) {
                missing.push_back(p.string());
                ok = false;
            }
        }
        if (!ok) continue;
        out.push_back({e.pair_id, read_image(f), read_image(m), e.truth});
    }
    if (!missing.empty()) {
        std::string msg = "missing pair files:";
        for (const auto& p : missing) msg += " " + p;
        throw IoError(msg);
    }
    return out;
}

namespace {

std::string pair_name(int i)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "pair_%05d", i);
    return buf;
}

} // namespace

std::vector<PairSample> generate_samples(const GenDataOptions& opt)
{
    if (opt.pairs < 1) throw ConfigError("pairs must be >= 1");
    opt.phantom.validate();
    opt.pair.validate();
    std::vector<PairSample> out;
    out.reserve(static_cast<std::size_t>(opt.pairs));
    for (int i = 0; i < opt.pairs; ++i) {
        PhantomConfig ph = opt.phantom;
        ph.seed = opt.seed;
        PhantomPair p = generate_pair(ph, opt.pair, static_cast<std::uint64_t>(i));
        out.push_back({pair_name(i), std::move(p.fixed), std::move(p.moving), p.truth});
    }
    return out;
}

std::vector<ManifestEntry> generate_dataset(const fs::path& out_dir, const GenDataOptions& opt)
{
    if (opt.pairs < 1) throw ConfigError("pairs must be >= 1");
    opt.phantom.validate();
    opt.pair.validate();
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec || !fs::is_directory(out_dir)) throw IoError("cannot create output directory " + out_dir.string());

    std::vector<ManifestEntry> entries;
    for (int i = 0; i < opt.pairs; ++i) {
        PhantomConfig ph = opt.phantom;
        ph.seed = opt.seed;
        const PhantomPair p = generate_pair(ph, opt.pair, static_cast<std::uint64_t>(i));
        const std::string id = pair_name(i);
        ManifestEntry e{id, id + "_fixed.img1", id + "_moving.img1", p.truth};
        write_img1(out_dir / e.fixed, p.fixed);
        write_img1(out_dir / e.moving, p.moving);
        entries.push_back(std::move(e));
    }
    write_manifest(out_dir / kManifestName, entries);
    return entries;
}

} // namespace rlalign
