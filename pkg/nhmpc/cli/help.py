def show_usage():
    return (
        "USAGE: "
        "\n\tnhmpc [global options] command [command options] [arguments]"
        "\n\nCOMMANDS:"
        "\n\tanalyze \tPrints the Lie analysis, the privileged chart and the homogeneous approximation of a scenario."
        "\n\tchart \t\tPrints the privileged chart, the approximation coefficients and their convergence slopes."
        "\n\trun \t\tRuns the closed loop of a scenario and writes its trace and summary."
        "\n\tcompare \tRuns two scenarios concurrently and prints a side-by-side report."
        "\n\thelp \t\tShows a list of commands or help for a specific command."
        "\n\nGLOBAL OPTIONS:"
        "\n\t--config \tScenario file (INI). Given twice for compare."
        "\n\t--out \t\tOutput directory. Defaults to './nhmpc-out'."
        "\n\t--svg \t\tAlso writes an SVG figure of the run."
        "\n\t--seed \t\tOverrides the solver seed of the scenario."
        "\n\t--dump-config \tPrints the resolved scenario as INI and exits."
        "\n\t-h, --help \tShows this message."
    )


def help_analyze():
    return (
        "NAME:"
        "\tnhmpc analyze - Analyzes the vehicle of a scenario at its setpoint."
        "\n\nUSAGE:"
        "\tnhmpc analyze --config scenario.conf"
        "\n\nDESCRIPTION:"
        "\n\n\tPrints the growth vector, the weights, the degree of non-holonomy, the adapted frame, the"
        "\n\tprivileged coordinates, the homogeneous approximation with its homogeneity residual and the tailored cost"
        "\n\texponents.\n"
    )


def help_chart():
    return (
        "NAME:"
        "\tnhmpc chart - Prints the privileged chart of a scenario."
        "\n\nUSAGE:"
        "\tnhmpc chart --config scenario.conf"
        "\n\nDESCRIPTION:"
        "\n\n\tPrints the linear adapted coordinates y, the polynomial corrections z(y) and the coefficients of the"
        "\n\thomogeneous approximation, one row per field, component and monomial.\n"
    )


def help_run():
    return (
        "NAME:"
        "\tnhmpc run - Runs the closed loop of a scenario."
        "\n\nUSAGE:"
        "\tnhmpc run --config scenario.conf [--out dir] [--svg] [--seed n]"
        "\n\nDESCRIPTION:"
        "\n\n\tSimulates the receding-horizon controller and writes the trace (CSV), the summary and, if requested,"
        "\n\tan SVG figure to the output directory. Exits with 1 if the closed loop diverges.\n"
    )


def help_compare():
    return (
        "NAME:"
        "\tnhmpc compare - Compares two scenarios of the same vehicle."
        "\n\nUSAGE:"
        "\tnhmpc compare --config a.conf --config b.conf [--out dir] [--svg]"
        "\n\nDESCRIPTION:"
        "\n\n\tRuns both closed loops concurrently and prints final deviations, value functions, iteration totals and"
        "\n\tconvergence / stationarity verdicts side by side. Both scenarios must share vehicle and initial state.\n"
    )
