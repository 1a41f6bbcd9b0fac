#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

using namespace std;
namespace fs = std::filesystem;

// Process-level checks of the CLI binary: exit codes and byte-level
// reproducibility of artifacts. The binary path arrives via VISENT_BIN.

namespace {

string binary() {
    const char* env = getenv("VISENT_BIN");
    REQUIRE(env != nullptr);
    return env;
}

int run(const string& args) {
    const string cmd = binary() + " " + args + " >/dev/null 2>&1";
    const int rc = system(cmd.c_str());
    return WEXITSTATUS(rc);
}

fs::path temp_dir(const string& name) {
    const fs::path p = fs::temp_directory_path() / "visent_cli" / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

vector<pair<string, string>> dir_digest(const fs::path& root) {
    vector<pair<string, string>> out;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (!e.is_regular_file()) continue;
        ifstream f(e.path(), ios::binary);
        string content((istreambuf_iterator<char>(f)), istreambuf_iterator<char>());
        out.emplace_back(fs::relative(e.path(), root).string(), content);
    }
    sort(out.begin(), out.end());
    return out;
}

}  // namespace

TEST_CASE("cli: gen-data reruns are byte-identical") {
    const fs::path dir = temp_dir("det");
    CHECK(run("gen-data --task depth_map --context II --count 3 --seed 11 --out " +
              (dir / "a").string()) == 0);
    CHECK(run("gen-data --task depth_map --context II --count 3 --seed 11 --out " +
              (dir / "b").string()) == 0);
    CHECK(dir_digest(dir / "a") == dir_digest(dir / "b"));
}

TEST_CASE("cli: exit codes by error family") {
    const fs::path dir = temp_dir("codes");
    // camera task cannot run in an all-image context: config error
    CHECK(run("gen-data --task camera_move --context II --count 1 --seed 1 --out " +
              (dir / "x").string()) == 2);
    // unknown task name: config error
    CHECK(run("gen-data --task sharpen --context II --count 1 --seed 1 --out " +
              (dir / "y").string()) == 2);
    // missing dataset directory: data error
    ofstream cfg(dir / "train.json");
    cfg << R"({"datasets": [")" << (dir / "missing").string() << R"("], "epochs": 1})";
    cfg.close();
    CHECK(run("train --config " + (dir / "train.json").string() + " --out " +
              (dir / "run").string()) == 3);
    // missing checkpoint: data error
    CHECK(run("inspect-checkpoint " + (dir / "nothing.ckpt").string()) == 3);
}

TEST_CASE("cli: unsupported recipe name is a config error") {
    const fs::path dir = temp_dir("recipe");
    CHECK(run("repro tab9-bogus --out " + dir.string()) == 2);
}
