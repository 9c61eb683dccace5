#include <cookiewalk/cli.hpp>

int main(int argc, char** argv)
{
    return cookiewalk::cli::run(argc, argv);
}
