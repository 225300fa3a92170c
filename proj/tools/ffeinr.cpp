#include <ffeinr/cli.hpp>

int main(int argc, char** argv) {
    ffeinr::tune_allocator();
    return ffeinr::run_cli(argc, argv);
}
