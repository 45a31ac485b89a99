import init, { feature_scatter, nonlinearity_curves, equalized_constellation } from "./pkg/ofdm_rff_web.js";

const COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];
const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function frame(canvas, xs, ys, xlabel, ylabel) {
  const ctx = canvas.getContext("2d");
  const pad = 48;
  const w = canvas.width, h = canvas.height;
  const fin = (v) => v.filter(Number.isFinite);
  let [x0, x1] = [Math.min(...fin(xs)), Math.max(...fin(xs))];
  let [y0, y1] = [Math.min(...fin(ys)), Math.max(...fin(ys))];
  const px = (x1 - x0) * 0.08 || 1e-3, py = (y1 - y0) * 0.08 || 1e-3;
  x0 -= px; x1 += px; y0 -= py; y1 += py;
  const sx = (x) => pad + (x - x0) / (x1 - x0) * (w - 1.5 * pad);
  const sy = (y) => h - pad - (y - y0) / (y1 - y0) * (h - 1.5 * pad);
  ctx.clearRect(0, 0, w, h);
  ctx.strokeStyle = "#888";
  ctx.strokeRect(pad, pad / 2, w - 1.5 * pad, h - 1.5 * pad);
  ctx.fillStyle = "#333";
  ctx.font = "12px sans-serif";
  ctx.fillText(xlabel, w / 2 - 20, h - 10);
  ctx.save(); ctx.translate(12, h / 2); ctx.rotate(-Math.PI / 2); ctx.fillText(ylabel, 0, 0); ctx.restore();
  for (let i = 0; i <= 4; i++) {
    const x = x0 + (x1 - x0) * i / 4, y = y0 + (y1 - y0) * i / 4;
    ctx.fillText(x.toPrecision(3), sx(x) - 14, h - pad + 16);
    ctx.fillText(y.toPrecision(3), 4, sy(y) + 4);
  }
  return { ctx, sx, sy };
}

function dot(ctx, x, y, r, color, filled) {
  ctx.beginPath();
  ctx.arc(x, y, r, 0, 2 * Math.PI);
  if (filled) { ctx.fillStyle = color; ctx.fill(); } else { ctx.strokeStyle = color; ctx.stroke(); }
}

function runScatter() {
  const t = performance.now();
  const r = JSON.parse(feature_scatter(num("sc-ebn0"), num("sc-p"), num("sc-n"), BigInt(num("sc-seed")), 0.5));
  const xs = r.points.map((q) => q.x).concat(r.truth.map((q) => q[1]));
  const ys = r.points.map((q) => q.y).concat(r.truth.map((q) => q[2]));
  const { ctx, sx, sy } = frame($("sc-canvas"), xs, ys, "Re b3", "Im b3");
  const devices = r.truth.map((q) => q[0]);
  for (const q of r.points) {
    dot(ctx, sx(q.x), sy(q.y), 3, COLORS[devices.indexOf(q.device) % COLORS.length], q.source === "payload");
  }
  r.truth.forEach(([label, x, y], i) => {
    ctx.fillStyle = COLORS[i % COLORS.length];
    ctx.fillRect(sx(x) - 5, sy(y) - 5, 10, 10);
    ctx.fillText(label, sx(x) + 8, sy(y) - 6);
  });
  $("sc-stats").textContent =
    `filled = payload, hollow = pilot, squares = true b3\n` +
    `3-NN accuracy  payload ${r.acc_payload.toFixed(3)}  pilot ${r.acc_pilot.toFixed(3)}\n` +
    `separability   payload ${r.separability_payload.toFixed(3)}  pilot ${r.separability_pilot.toFixed(3)}\n` +
    `skipped frames ${r.skips}, ${(performance.now() - t).toFixed(0)} ms`;
}

function runCurves() {
  const curves = JSON.parse(nonlinearity_curves(num("am-max"), 200));
  const amp = curves[0].amplitude_in;
  const am = frame($("am-canvas"), amp, curves.flatMap((c) => c.amplitude_out), "|u|", "|x|");
  const pm = frame($("pm-canvas"), amp, curves.flatMap((c) => c.phase_deg), "|u|", "phase (deg)");
  curves.forEach((c, i) => {
    for (const [plot, ys] of [[am, c.amplitude_out], [pm, c.phase_deg]]) {
      plot.ctx.strokeStyle = COLORS[i];
      plot.ctx.beginPath();
      c.amplitude_in.forEach((x, j) => (j ? plot.ctx.lineTo(plot.sx(x), plot.sy(ys[j])) : plot.ctx.moveTo(plot.sx(x), plot.sy(ys[j]))));
      plot.ctx.stroke();
      plot.ctx.fillStyle = COLORS[i];
      plot.ctx.fillText(c.device, plot.sx(amp[amp.length - 1]) - 30, plot.sy(ys[ys.length - 1]) - 6);
    }
  });
}

function runConstellation() {
  const r = JSON.parse(equalized_constellation(num("co-dev"), num("co-ebn0"), 1, BigInt(num("co-seed")), num("co-drive")));
  const xs = r.soft.map((z) => z[0]), ys = r.soft.map((z) => z[1]);
  const { ctx, sx, sy } = frame($("co-canvas"), xs, ys, "Re", "Im");
  for (const [x, y] of r.soft) dot(ctx, sx(x), sy(y), 1.5, COLORS[num("co-dev")], true);
  const fmt = (v) => v.map(([a, b]) => `${a.toFixed(4)}${b < 0 ? "-" : "+"}${Math.abs(b).toFixed(4)}i`).join("  ");
  $("co-stats").textContent =
    `symbol error rate ${r.symbol_error_rate.toExponential(2)}\n` +
    `b (payload) ${fmt(r.b_payload)}\n` +
    `b (pilot)   ${fmt(r.b_pilot)}`;
}

function guard(f) {
  return () => {
    $("status").textContent = "running...";
    setTimeout(() => {
      try { f(); $("status").textContent = "ready"; } catch (e) { $("status").textContent = `error: ${e.message ?? e}`; }
    }, 0);
  };
}

await init();
$("sc-run").onclick = guard(runScatter);
$("am-run").onclick = guard(runCurves);
$("co-run").onclick = guard(runConstellation);
$("status").textContent = "ready";
guard(runCurves)();
