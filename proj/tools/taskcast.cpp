#include "taskcast/cli.hpp"

int main(int argc, char** argv)
{
    return taskcast::cli::dispatch(argc, argv);
}
