import init, { simulate_replication, score_votes, fit_sos_curve } from "./pkg/ccr_wasm.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);
let lastScores = [];

function show(id, text, isError = false) {
  $(id).textContent = text;
  $(id).className = isError ? "error" : "";
}

// Maps data ranges onto a canvas with a margin and draws axes.
function frame(canvas, xr, yr) {
  const ctx = canvas.getContext("2d");
  const m = 36, w = canvas.width, h = canvas.height;
  ctx.clearRect(0, 0, w, h);
  const sx = (x) => m + ((x - xr[0]) / (xr[1] - xr[0])) * (w - 2 * m);
  const sy = (y) => h - m - ((y - yr[0]) / (yr[1] - yr[0])) * (h - 2 * m);
  ctx.strokeStyle = "#999";
  ctx.strokeRect(m, m, w - 2 * m, h - 2 * m);
  ctx.fillStyle = "#555";
  ctx.font = "11px sans-serif";
  ctx.fillText(xr[0].toFixed(2), m, h - m + 14);
  ctx.fillText(xr[1].toFixed(2), w - m - 24, h - m + 14);
  ctx.fillText(yr[0].toFixed(2), 2, h - m);
  ctx.fillText(yr[1].toFixed(2), 2, m + 8);
  return { ctx, sx, sy };
}

function dot(ctx, x, y, color) {
  ctx.fillStyle = color;
  ctx.beginPath();
  ctx.arc(x, y, 3, 0, 2 * Math.PI);
  ctx.fill();
}

function runSimulation() {
  try {
    const v = JSON.parse(simulate_replication(
      num("sim-n"), num("sim-low"), num("sim-span"), num("sim-sv"), num("sim-sb"),
      num("sim-raters"), num("sim-votes"), num("sim-offset"), num("sim-seed")));
    const all = v.runs.flat();
    const r = [Math.min(...all) - 0.1, Math.max(...all) + 0.1];
    const { ctx, sx, sy } = frame($("sim-plot"), r, r);
    ctx.strokeStyle = "#ccc";
    ctx.beginPath();
    ctx.moveTo(sx(r[0]), sy(r[0]));
    ctx.lineTo(sx(r[1]), sy(r[1]));
    ctx.stroke();
    v.runs[0].forEach((x, i) => dot(ctx, sx(x), sy(v.runs[1][i]), "#2a6fdb"));
    v.runs[0].forEach((x, i) => dot(ctx, sx(x), sy(v.runs[2][i]), "#d9822b"));
    const lines = v.pairs.map(([a, b, pcc, srcc, rmse]) =>
      `${a} vs ${b}: PCC ${pcc.toFixed(3)}  SRCC ${srcc.toFixed(3)}  RMSE ${rmse.toFixed(3)}`);
    lines.push(`ICC(A,1) ${v.icc.toFixed(3)}`);
    lines.push(`mean RMSE ${v.mean_rmse.toFixed(3)} -> ${v.mean_rmse_after_mapping.toFixed(3)} after mapping run3`);
    lines.push("blue: run1 vs run2, orange: run1 vs run3");
    show("sim-out", lines.join("\n"));
  } catch (e) {
    show("sim-out", String(e), true);
  }
}

function parseVotes(text) {
  return text.split("\n").map((l) => l.trim()).filter(Boolean).map((l, i) => {
    const [condition_id, rating, order] = l.split(",").map((s) => s.trim());
    if (order === undefined) throw new Error(`line ${i + 1}: expected condition,rating,order`);
    return { condition_id, rating: Number(rating), order };
  });
}

function runScoring() {
  try {
    const scores = JSON.parse(score_votes(JSON.stringify(parseVotes($("votes").value))));
    lastScores = scores;
    const { ctx, sx, sy } = frame($("score-plot"), [0, scores.length], [-3, 3]);
    ctx.strokeStyle = "#ccc";
    ctx.beginPath();
    ctx.moveTo(sx(0), sy(0));
    ctx.lineTo(sx(scores.length), sy(0));
    ctx.stroke();
    scores.forEach((s, i) => {
      const x = sx(i + 0.5);
      ctx.strokeStyle = "#333";
      ctx.beginPath();
      ctx.moveTo(x, sy(s.mean - s.ci95));
      ctx.lineTo(x, sy(s.mean + s.ci95));
      ctx.stroke();
      dot(ctx, x, sy(s.mean), "#2a6fdb");
      ctx.fillStyle = "#333";
      ctx.fillText(s.condition_id, x - 4, sy(-3) + 14);
    });
    show("score-out", scores.map((s) =>
      `${s.condition_id}: CMOS ${s.mean.toFixed(3)} ± ${s.ci95.toFixed(3)} (n=${s.n}, sd ${s.sd.toFixed(3)})`).join("\n"));
  } catch (e) {
    show("score-out", String(e), true);
  }
}

function runSos() {
  try {
    const points = $("sos-points").value.split("\n").map((l) => l.trim()).filter(Boolean)
      .map((l) => l.split(",").map(Number));
    const lo = num("sos-lo"), hi = num("sos-hi");
    const fit = JSON.parse(fit_sos_curve(JSON.stringify(points), lo, hi));
    const ymax = Math.max(1.5, ...points.map((p) => p[1]), ...fit.curve.map((c) => c[1]));
    const { ctx, sx, sy } = frame($("sos-plot"), [lo, hi], [0, ymax]);
    ctx.strokeStyle = "#d9822b";
    ctx.beginPath();
    fit.curve.forEach(([x, y], i) => (i ? ctx.lineTo(sx(x), sy(y)) : ctx.moveTo(sx(x), sy(y))));
    ctx.stroke();
    points.forEach(([x, y]) => dot(ctx, sx(x), sy(y), "#2a6fdb"));
    show("sos-out", `a = ${fit.a.toFixed(4)}, variance RMSE ${fit.rmse.toFixed(4)}`);
  } catch (e) {
    show("sos-out", String(e), true);
  }
}

await init();
$("sim-run").onclick = runSimulation;
$("score-run").onclick = runScoring;
$("sos-run").onclick = runSos;
$("sos-from-scores").onclick = () => {
  if (!lastScores.length) runScoring();
  $("sos-points").value = lastScores.map((s) => `${s.mean},${s.sd}`).join("\n");
  runSos();
};
runSimulation();
runScoring();
runSos();
