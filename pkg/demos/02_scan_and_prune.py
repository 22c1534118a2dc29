"""From RTL sources to the selected signal list.

Scans a two-module design into the module lookup table (module -> declared
type -> variable names, plus instantiation edges), then prunes a waveform
hierarchy against it: testbench probes and non-target instances drop out,
and every surviving signal knows which target module owns it.
"""

from wavetriage.rtl import DesignSources, scan_sources, signals_for_targets
from wavetriage.selection import prune

SOURCES = DesignSources(
    files=[
        (
            "ctrl.sv",
            "module ctrl(input wire clk, input wire rdy, output reg grant);\n"
            "  reg [1:0] state_q;\n"
            "  fsm u_fsm (.clk(clk));\n"
            "  always_ff @(posedge clk) begin\n"
            "    if (rdy) grant <= 1'b1;\n"
            "  end\n"
            "endmodule\n",
        ),
        (
            "fsm.sv",
            "module fsm(input wire clk);\n"
            "  reg [2:0] cur_q;\n"
            "  always_ff @(posedge clk) cur_q <= cur_q + 3'd1;\n"
            "endmodule\n",
        ),
    ]
)

table = scan_sources(SOURCES)
print("lookup table:")
for module, groups in table.entries.items():
    for decl_type, names in sorted(groups.items()):
        print(f"  {module:<6} {decl_type:<10} {sorted(names)}")
print(f"instances: {table.instances['ctrl']}")

# a waveform hierarchy as the VCD reader would list it
hierarchy = [
    ("tb.clk_gen.clk", "!", 1),          # testbench layer: skipped
    ("tb.dut.state_q", '"', 2),          # ctrl's own register
    ("tb.dut.grant", "#", 1),
    ("tb.dut.monitor_probe", "$", 1),    # not declared by ctrl: dropped
    ("tb.dut.u_fsm.cur_q", "%", 3),      # nested target instance
]

report = prune(
    hierarchy,
    signals_for_targets(table, ["ctrl", "fsm"]),
    table.instances,
    top_module="ctrl",
    dut_root="tb.dut",
)
print(f"\nselected {len(report.selected)} of {len(hierarchy)} signals:")
for full_name, id_code, width, owner in report.selected:
    print(f"  {full_name:<18} -> {owner}")
print(f"dropped: {report.dropped_count}, per target: {report.per_target_counts}")
